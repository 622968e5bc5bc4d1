#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdmd/dmd.hpp"
#include "kdmd/edit.hpp"
#include "kdmd/fluid.hpp"

namespace kdmd {

using Json = nlohmann::json;
using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr std::uint32_t kDatasetVersion = 1;

std::uint32_t crc32(const std::uint8_t* data, size_t len);

Json grid_to_json(const GridSpec& g);
GridSpec grid_from_json(const Json& j);

Json provenance_to_json(const Provenance& p);
Provenance provenance_from_json(const Json& j);

Json edit_to_json(const EditSpec& e);
EditSpec edit_from_json(const Json& j);

Json scene_to_json(const SceneConfig& s);
SceneConfig scene_from_json(const Json& j);

// Provenance string stored with generated datasets.
std::string dataset_provenance(const SceneConfig& scene);

Bytes model_to_bytes(const ReducedModel& m);
ReducedModel model_from_bytes(const Bytes& bytes);

void save_model(const std::filesystem::path& path, const ReducedModel& m);
ReducedModel load_model(const std::filesystem::path& path);

// Directory with manifest.json, snapshots.bin and (optionally) density.bin.
void save_dataset(const std::filesystem::path& dir, const Dataset& d);
void save_dataset(const std::filesystem::path& dir, const SnapshotMatrix& s);
Dataset load_dataset(const std::filesystem::path& dir);

Json load_json(const std::filesystem::path& path);
void save_json(const std::filesystem::path& path, const Json& j);

Bytes read_file(const std::filesystem::path& path);
// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, const Bytes& bytes);

}  // namespace kdmd
