#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cinpp/complex.hpp"
#include "cinpp/features.hpp"
#include "cinpp/model.hpp"
#include "cinpp/train.hpp"

namespace cinpp {

using Json = nlohmann::json;

struct Dataset {
  std::vector<Graph> graphs;
  TaskType task = TaskType::Regression;
  std::size_t target_width = 0;  // 0 when unlabeled
  std::string source;            // path or generator description
  std::uint64_t hash = 0;        // FNV-1a of the serialized JSON-Lines content
};

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// ---- graphs ------------------------------------------------------------------

// Errors carry `line` when given.
Graph graph_from_json(const Json& j, std::optional<std::size_t> line = std::nullopt);
Json graph_to_json(const Graph& g);

Dataset parse_graph_jsonl_text(std::string_view text, const std::string& source = "<memory>");
Dataset parse_graph_jsonl(const std::filesystem::path& path);
std::string dataset_to_jsonl(const Dataset& d);
void write_dataset(const std::filesystem::path& path, const Dataset& d);

// Lifts and featurizes every graph (in parallel when threads > 1; results keep
// input order).
std::vector<Sample> prepare_samples(const Dataset& d, std::size_t max_ring_size, RingInit ring_init,
                                    std::size_t threads = 1);

// Worker count from CINPP_NUM_THREADS (default 1).
std::size_t env_threads();

// ---- complexes ---------------------------------------------------------------

Json serialize_complex(const CellComplex& c);
// Adopts the stored tables as written; run validate() to check them.
CellComplex deserialize_complex(const Json& j);

// ---- model configuration and checkpoints --------------------------------------

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

inline constexpr std::uint32_t kCheckpointMajor = 1;
inline constexpr std::uint32_t kCheckpointMinor = 0;

struct Checkpoint {
  CinModel model;
  std::optional<TrainState> state;
};

// Layout: "CINPPCKP", u32 major, u32 minor, u64 header length, JSON header,
// little-endian f64 blob. The header indexes every parameter and buffer by
// name/offset/shape and carries an FNV-1a checksum of the blob.
std::string checkpoint_bytes(CinModel& model, const TrainState* state = nullptr);
Checkpoint checkpoint_from_bytes(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, CinModel& model, const TrainState* state = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- synthetic data ----------------------------------------------------------

enum class SyntheticFamily { RingCount, FusedChain, CyclePair };
SyntheticFamily parse_family(const std::string& s);
std::string to_string(SyntheticFamily f);

struct SyntheticParams {
  std::size_t count = 100;           // ring-count: number of graphs
  std::size_t max_hexagons = 4;      // ring-count: hexagons per graph drawn from 0..max
  std::size_t max_distractors = 3;   // ring-count: non-hexagon rings per graph drawn from 0..max
  std::size_t max_pendants = 4;      // ring-count: extra tree vertices
  std::size_t min_length = 3;        // fused-chain / cycle-pair: smallest size
  std::size_t max_length = 6;        // fused-chain / cycle-pair: largest size
};

// Linear chain of n edge-fused hexagons (naphthalene for n = 2).
Graph fused_chain(std::size_t n);
Graph cycle_graph(std::size_t n);
Graph disjoint_union(const Graph& a, const Graph& b);

// ring-count: random graphs labeled with their number of induced 6-cycles.
// fused-chain: chains of min_length..max_length hexagons labeled with n.
// cycle-pair: C_{2m} (label 1) and C_m + C_m (label 0) for m in
// min_length..max_length.
Dataset generate_synthetic(SyntheticFamily family, const SyntheticParams& params, std::uint64_t seed);

}  // namespace cinpp
