#include "redf/artifact.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "redf/error.hpp"

namespace redf {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int k = 0; k < 2; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ArtifactError(ArtifactError::Check::Shape,
                          std::string("truncated while reading ") + what + " at byte " +
                              std::to_string(pos_));
    }
  }
  std::uint64_t uint(std::size_t width, const char* what) {
    need(width, what);
    std::uint64_t v = 0;
    for (std::size_t k = 0; k < width; ++k) v |= static_cast<std::uint64_t>(in_[pos_ + k]) << (8 * k);
    pos_ += width;
    return v;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(uint(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(uint(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(uint(4, what)); }
  double f64(const char* what) { return std::bit_cast<double>(uint(8, what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'R', 'E', 'D', 'F'};
constexpr std::uint32_t kMaxDim = 1u << 16;

[[noreturn]] void shape_error(const std::string& what) {
  throw ArtifactError(ArtifactError::Check::Shape, what);
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_artifact(const ModelParams& params, const Scaler& scaler) {
  params.check_shapes();
  const auto& hp = params.hyper;
  Writer w;
  w.bytes(kMagic, 4);
  w.u16(kArtifactVersion);
  w.u32(static_cast<std::uint32_t>(hp.timesteps));
  w.u32(static_cast<std::uint32_t>(hp.features));
  w.u32(static_cast<std::uint32_t>(hp.units));
  w.u32(static_cast<std::uint32_t>(hp.dense_units));
  w.f64(hp.dropout);
  w.u8(scaler.kind == ScalerKind::ZScore ? 0 : 1);
  w.f64(scaler.a);
  w.f64(scaler.b);

  std::uint32_t blocks = 0;
  for_each_tensor(params, [&](const std::string&, auto, std::size_t, std::size_t) { ++blocks; });
  w.u32(blocks);
  for_each_tensor(params, [&](const std::string& name, auto values, std::size_t rows, std::size_t cols) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(rows));
    w.u32(static_cast<std::uint32_t>(cols));
    for (double v : values) w.f64(v);
  });
  const std::uint32_t crc = crc32_of(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

ModelArtifact decode_artifact(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.remaining() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw ArtifactError(ArtifactError::Check::Magic, "file does not start with REDF");
  }
  r.str(4, "magic");
  const std::uint16_t version = r.u16("version");
  if (version != kArtifactVersion) {
    throw ArtifactError(ArtifactError::Check::Version,
                        "unsupported format version " + std::to_string(version));
  }

  ModelArtifact art;
  HyperParams hp;
  hp.timesteps = r.u32("timesteps");
  hp.features = r.u32("features");
  hp.units = r.u32("units");
  hp.dense_units = r.u32("dense units");
  hp.dropout = r.f64("dropout");
  for (std::size_t d : {hp.timesteps, hp.features, hp.units, hp.dense_units}) {
    if (d == 0 || d > kMaxDim) shape_error("architecture dimension " + std::to_string(d) + " out of range");
  }
  if (!(hp.dropout >= 0.0 && hp.dropout < 1.0)) shape_error("dropout rate out of range");

  const std::uint8_t kind = r.u8("scaler kind");
  if (kind > 1) shape_error("unknown scaler kind " + std::to_string(kind));
  art.scaler.kind = kind == 0 ? ScalerKind::ZScore : ScalerKind::MinMax;
  art.scaler.a = r.f64("scaler");
  art.scaler.b = r.f64("scaler");
  if (!std::isfinite(art.scaler.a) || !std::isfinite(art.scaler.b)) shape_error("scaler parameters not finite");

  art.params = ModelParams::zeros(hp);
  std::uint32_t expected_blocks = 0;
  for_each_tensor(art.params, [&](const std::string&, auto, std::size_t, std::size_t) { ++expected_blocks; });
  const std::uint32_t blocks = r.u32("block count");
  if (blocks != expected_blocks) {
    shape_error("expected " + std::to_string(expected_blocks) + " weight blocks, found " +
                std::to_string(blocks));
  }
  for_each_tensor(art.params, [&](const std::string& name, auto values, std::size_t rows, std::size_t cols) {
    const std::uint16_t len = r.u16("block name length");
    const std::string got = r.str(len, "block name");
    if (got != name) shape_error("expected block '" + name + "', found '" + got + "'");
    const std::uint32_t br = r.u32("block rows");
    const std::uint32_t bc = r.u32("block cols");
    if (br != rows || bc != cols) {
      shape_error("block '" + name + "' declared " + std::to_string(br) + "x" + std::to_string(bc) +
                  ", architecture needs " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    r.need(static_cast<std::size_t>(br) * bc * 8, "block data");
    for (double& v : values) v = r.f64("block data");
  });
  if (r.remaining() != 4) {
    shape_error(r.remaining() < 4 ? "missing checksum"
                                  : std::to_string(r.remaining() - 4) + " unexpected trailing bytes");
  }
  const std::size_t body = r.position();
  const std::uint32_t stored = r.u32("checksum");
  const std::uint32_t actual = crc32_of(bytes.first(body));
  if (stored != actual) {
    throw ArtifactError(ArtifactError::Check::Checksum, "stored CRC does not match contents");
  }
  art.checksum = stored;
  return art;
}

void serialize(const ModelParams& params, const Scaler& scaler, const std::filesystem::path& path) {
  const auto bytes = encode_artifact(params, scaler);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArtifactError(ArtifactError::Check::Io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArtifactError(ArtifactError::Check::Io, "write failed for '" + path.string() + "'");
}

ModelArtifact deserialize(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError(ArtifactError::Check::Io, "cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_artifact(bytes);
}

}  // namespace redf
