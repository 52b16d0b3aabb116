#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "haanet/haze.hpp"
#include "haanet/tensor.hpp"

namespace haanet {

/// One synthesized pair as recorded in a dataset manifest.
struct ManifestEntry {
  std::string id;
  std::uint64_t seed = 0;
  double beta = 0.0;
  Airlight airlight{};
};

/// Plain-text sidecar ("manifest.txt"): a version comment, `size` and
/// `seed` lines, a column header, then one whitespace-separated row per
/// pair: id seed beta A_r A_g A_b.
struct Manifest {
  int size = 0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

inline constexpr const char* kManifestName = "manifest.txt";

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

struct PairPaths {
  std::filesystem::path clean;
  std::filesystem::path hazy;
  std::filesystem::path transmission;
};
PairPaths pair_paths(const std::filesystem::path& dir, const std::string& id);

/// Seed of pair `index` in a dataset generated from `seed`.
std::uint64_t pair_seed(std::uint64_t seed, std::size_t index);

/// Writes `count` (clean, hazy, transmission) triplets plus the manifest.
/// Output bytes depend only on (seed, count, size).
Manifest synth_dataset(const std::filesystem::path& dir, std::uint64_t seed,
                       int count, int size);

/// In-memory hazy/clean pairs, (1,3,h,w) each.
struct PairSet {
  std::vector<std::string> ids;
  std::vector<Tensor<float>> hazy;
  std::vector<Tensor<float>> clean;

  std::size_t size() const { return ids.size(); }
};

/// Same scenes as synth_dataset, without 8-bit quantization.
PairSet synth_pairs(std::uint64_t seed, int count, int size);

struct LoadedDataset {
  PairSet pairs;
  std::vector<std::string> missing;  // ids whose files could not be read
};

/// Loads every manifest pair from `dir`; unreadable pairs are listed in
/// `missing` rather than aborting the load.
LoadedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace haanet
