#include "haanet/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "haanet/image_io.hpp"
#include "haanet/rng.hpp"

namespace haanet {
namespace {

std::string pair_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return buf;
}

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# haanet manifest v1\n";
  out << "size " << manifest.size << "\n";
  out << "seed " << manifest.seed << "\n";
  out << "# id seed beta A_r A_g A_b\n";
  for (const ManifestEntry& e : manifest.entries) {
    out << e.id << ' ' << e.seed << ' ' << exact(e.beta) << ' '
        << exact(e.airlight[0]) << ' ' << exact(e.airlight[1]) << ' '
        << exact(e.airlight[2]) << "\n";
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  Manifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    bool ok = true;
    if (head == "size") {
      ok = static_cast<bool>(fields >> m.size);
    } else if (head == "seed") {
      ok = static_cast<bool>(fields >> m.seed);
    } else {
      ManifestEntry e;
      e.id = head;
      ok = static_cast<bool>(fields >> e.seed >> e.beta >> e.airlight[0] >>
                             e.airlight[1] >> e.airlight[2]);
      if (ok) m.entries.push_back(e);
    }
    if (!ok) {
      throw std::runtime_error("malformed manifest line " + std::to_string(line_no) +
                               " in " + path.string());
    }
  }
  return m;
}

PairPaths pair_paths(const std::filesystem::path& dir, const std::string& id) {
  return {dir / (id + "_clean.ppm"), dir / (id + "_hazy.ppm"),
          dir / (id + "_trans.ppm")};
}

std::uint64_t pair_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, index);
}

Manifest synth_dataset(const std::filesystem::path& dir, std::uint64_t seed,
                       int count, int size) {
  if (count <= 0) throw std::invalid_argument("count must be positive");
  if (size % 4 != 0) {
    throw std::invalid_argument("size must be a multiple of 4, got " +
                                std::to_string(size));
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory " + dir.string());
  }
  Manifest m;
  m.size = size;
  m.seed = seed;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = pair_seed(seed, static_cast<std::size_t>(i));
    const SceneSpec<double> scene = generate_scene(s, size);
    const HazyPair<double> pair = synthesize(scene);
    const std::string id = pair_id(static_cast<std::size_t>(i));
    const PairPaths paths = pair_paths(dir, id);
    save_ppm(paths.clean, pair.clean.cast<float>());
    save_ppm(paths.hazy, pair.hazy.cast<float>());
    save_ppm_gray(paths.transmission, pair.transmission.cast<float>());
    m.entries.push_back({id, s, scene.beta, scene.airlight});
  }
  write_manifest(dir / kManifestName, m);
  return m;
}

PairSet synth_pairs(std::uint64_t seed, int count, int size) {
  PairSet set;
  for (int i = 0; i < count; ++i) {
    const HazyPair<double> pair =
        generate_pair(pair_seed(seed, static_cast<std::size_t>(i)), size);
    set.ids.push_back(pair_id(static_cast<std::size_t>(i)));
    set.hazy.push_back(pair.hazy.cast<float>());
    set.clean.push_back(pair.clean.cast<float>());
  }
  return set;
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  const Manifest m = read_manifest(dir / kManifestName);
  LoadedDataset out;
  for (const ManifestEntry& e : m.entries) {
    const PairPaths paths = pair_paths(dir, e.id);
    try {
      Tensor<float> hazy = load_ppm(paths.hazy);
      Tensor<float> clean = load_ppm(paths.clean);
      if (hazy.shape() != clean.shape()) {
        throw ImageIoError("hazy/clean size mismatch");
      }
      out.pairs.ids.push_back(e.id);
      out.pairs.hazy.push_back(std::move(hazy));
      out.pairs.clean.push_back(std::move(clean));
    } catch (const std::exception&) {
      out.missing.push_back(e.id);
    }
  }
  return out;
}

}  // namespace haanet
