// SPDX-License-Identifier: Apache-2.0
#include "advreg/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "advreg/errors.hpp"
#include "advreg/hash.hpp"

namespace advreg {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'R', 'G', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string& data() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::string_view bytes(std::size_t n) {
    if (in_.size() - pos_ < n) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
    auto out = in_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() { return std::string(bytes(u32())); }
  std::size_t pos() const { return pos_; }

 private:
  std::uint64_t le(int n) {
    auto b = bytes(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const ModelBundle& bundle, const std::string& spec_hash) {
  bundle.validate();
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.u32(kVersion);
  w.str(spec_hash);
  const auto params = bundle.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.u8(static_cast<std::uint8_t>(p.partition));
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u64(d);
    for (double v : p.value.values()) w.f64(v);
  }
  w.u64(fnv1a64(w.data()));
  return std::move(w.data());
}

Checkpoint checkpoint_from_bytes(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 8) throw ParseError("checkpoint too short");
  const auto body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a64(body)) throw ParseError("checkpoint checksum mismatch");

  Reader r(body);
  if (std::memcmp(r.bytes(sizeof kMagic).data(), kMagic, sizeof kMagic) != 0)
    throw ParseError("not a checkpoint file (bad magic)");
  if (const auto version = r.u32(); version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  std::string spec_hash = r.str();
  const std::uint32_t count = r.u32();
  std::vector<Parameter> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    Parameter p;
    p.name = r.str();
    const auto tag = r.u8();
    if (tag > static_cast<std::uint8_t>(Partition::kFQ))
      throw ParseError("parameter '" + p.name + "' has invalid partition tag " + std::to_string(tag));
    p.partition = static_cast<Partition>(tag);
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) throw ParseError("parameter '" + p.name + "' has invalid rank");
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d == 0 || d > (std::size_t{1} << 32)) throw ParseError("parameter '" + p.name + "' has invalid shape");
      total *= d;
    }
    if (total > (body.size() - r.pos()) / 8) throw ParseError("checkpoint truncated in '" + p.name + "'");
    std::vector<double> values(total);
    for (auto& v : values) v = r.f64();
    p.value = Tensor(std::move(shape), std::move(values));
    params.push_back(std::move(p));
  }
  if (r.pos() != body.size()) throw ParseError("trailing bytes in checkpoint");
  try {
    return Checkpoint{ModelBundle::from_parameters(std::move(params)), std::move(spec_hash)};
  } catch (const ContractError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle,
                      const std::string& spec_hash) {
  write_file_atomic(path, checkpoint_bytes(bundle, spec_hash));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(read_file(path));
}

std::string bundle_hash(const ModelBundle& bundle) {
  return hex64(fnv1a64(checkpoint_bytes(bundle, "")));
}

}  // namespace advreg
