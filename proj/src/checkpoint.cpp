#include "haanet/checkpoint.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace haanet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'H', 'A', 'A', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end)
      : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string text(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  void floats(std::vector<float>& out, std::size_t count) {
    need(count * 4);
    out.resize(count);
    std::memcpy(out.data(), bytes_.data() + pos_, count * 4);
    pos_ += count * 4;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const std::uint8_t* data, std::size_t len) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(len)));
}

std::string dims_str(const std::vector<std::uint32_t>& dims) {
  std::string s = "(";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    s += (i ? "," : "") + std::to_string(dims[i]);
  }
  return s + ")";
}

bool is_metadata(const std::string& name) {
  return name.rfind("meta.", 0) == 0 || name.rfind("train.", 0) == 0 ||
         name.rfind("loss.", 0) == 0;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& table) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(table.size()));
  for (const NamedTensor& t : table) {
    std::size_t count = 1;
    for (std::uint32_t d : t.dims) count *= d;
    if (count != t.values.size()) {
      throw CheckpointError("entry " + t.name + " has " +
                            std::to_string(t.values.size()) +
                            " values for dims " + dims_str(t.dims));
    }
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) put_u32(out, d);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.values.data());
    out.insert(out.end(), raw, raw + t.values.size() * 4);
  }
  put_u32(out, crc(out.data(), out.size()));
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError("not a HAAN checkpoint");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= std::uint32_t(bytes[body + i]) << (8 * i);
  if (stored != crc(bytes.data(), body)) {
    throw CheckpointError("checkpoint checksum mismatch");
  }
  Reader in(bytes, body);
  in.text(4);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  std::vector<NamedTensor> table(count);
  for (NamedTensor& t : table) {
    t.name = in.text(in.u32());
    t.dims.resize(in.u32());
    std::size_t n = 1;
    for (std::uint32_t& d : t.dims) {
      d = in.u32();
      n *= d;
    }
    in.floats(t.values, n);
  }
  if (in.pos() != body) throw CheckpointError("trailing bytes in checkpoint");
  return table;
}

void write_checkpoint(const std::filesystem::path& path,
                      const std::vector<NamedTensor>& table) {
  const std::vector<std::uint8_t> bytes = encode_checkpoint(table);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

NamedTensor scalar_entry(const std::string& name, double value) {
  return {name, {1}, {static_cast<float>(value)}};
}

NamedTensor u64_entry(const std::string& name, std::uint64_t value) {
  NamedTensor t{name, {4}, {}};
  for (int i = 0; i < 4; ++i) {
    t.values.push_back(static_cast<float>((value >> (16 * i)) & 0xffffu));
  }
  return t;
}

const NamedTensor* find_entry(const std::vector<NamedTensor>& table,
                              const std::string& name) {
  for (const NamedTensor& t : table) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

double scalar_value(const std::vector<NamedTensor>& table, const std::string& name) {
  const NamedTensor* t = find_entry(table, name);
  if (!t || t->values.size() != 1) {
    throw CheckpointError("checkpoint lacks scalar entry " + name);
  }
  return t->values[0];
}

std::uint64_t u64_value(const std::vector<NamedTensor>& table,
                        const std::string& name) {
  const NamedTensor* t = find_entry(table, name);
  if (!t || t->values.size() != 4) {
    throw CheckpointError("checkpoint lacks integer entry " + name);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint64_t>(t->values[i]) << (16 * i);
  }
  return v;
}

template <typename S>
std::vector<NamedTensor> net_table(NetWeights<S>& weights) {
  const NetConfig& c = weights.config;
  std::vector<NamedTensor> table = {
      scalar_entry("meta.base_channels", c.base_channels),
      scalar_entry("meta.num_haab", c.num_haab),
      scalar_entry("meta.use_haam", c.use_haam ? 1 : 0),
      scalar_entry("meta.use_mfem", c.use_mfem ? 1 : 0),
      scalar_entry("meta.use_skfusion", c.use_skfusion ? 1 : 0),
  };
  weights.visit([&](const std::string& name, Tensor<S>& t) {
    const Shape s = t.shape();
    NamedTensor e{name,
                  {std::uint32_t(s.n), std::uint32_t(s.c), std::uint32_t(s.h),
                   std::uint32_t(s.w)},
                  {}};
    e.values.reserve(t.size());
    for (S v : t.data()) e.values.push_back(static_cast<float>(v));
    table.push_back(std::move(e));
  });
  return table;
}

template <typename S>
NetWeights<S> net_from_table(const std::vector<NamedTensor>& table) {
  NetConfig config;
  config.base_channels = static_cast<int>(scalar_value(table, "meta.base_channels"));
  config.num_haab = static_cast<int>(scalar_value(table, "meta.num_haab"));
  config.use_haam = scalar_value(table, "meta.use_haam") != 0;
  config.use_mfem = scalar_value(table, "meta.use_mfem") != 0;
  config.use_skfusion = scalar_value(table, "meta.use_skfusion") != 0;
  NetWeights<S> weights = NetWeights<S>::init(config, 0);

  std::ostringstream mismatch;
  std::vector<std::string> seen;
  weights.visit([&](const std::string& name, Tensor<S>& t) {
    seen.push_back(name);
    const Shape s = t.shape();
    const std::vector<std::uint32_t> want = {std::uint32_t(s.n), std::uint32_t(s.c),
                                             std::uint32_t(s.h), std::uint32_t(s.w)};
    const NamedTensor* e = find_entry(table, name);
    if (!e) {
      mismatch << "  " << name << ": network " << dims_str(want)
               << ", checkpoint missing\n";
      return;
    }
    if (e->dims != want) {
      mismatch << "  " << name << ": network " << dims_str(want) << ", checkpoint "
               << dims_str(e->dims) << "\n";
      return;
    }
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(e->values[i]);
  });
  for (const NamedTensor& e : table) {
    if (is_metadata(e.name)) continue;
    if (std::find(seen.begin(), seen.end(), e.name) == seen.end()) {
      mismatch << "  " << e.name << ": network missing, checkpoint "
               << dims_str(e.dims) << "\n";
    }
  }
  if (!mismatch.str().empty()) {
    throw CheckpointError("checkpoint does not match network:\n" + mismatch.str());
  }
  return weights;
}

std::size_t table_parameter_count(const std::vector<NamedTensor>& table) {
  std::size_t total = 0;
  for (const NamedTensor& t : table) {
    if (is_metadata(t.name)) continue;
    total += t.values.size();
  }
  return total;
}

template std::vector<NamedTensor> net_table(NetWeights<float>&);
template std::vector<NamedTensor> net_table(NetWeights<double>&);
template NetWeights<float> net_from_table(const std::vector<NamedTensor>&);
template NetWeights<double> net_from_table(const std::vector<NamedTensor>&);

}  // namespace haanet
