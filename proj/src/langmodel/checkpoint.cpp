#include "dgpo/langmodel/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dgpo/util/hashing.hpp"

namespace dgpo::langmodel {

namespace {

constexpr char kModelMagic[8] = {'D', 'G', 'P', 'O', 'C', 'K', 'P', 'T'};
constexpr char kTensorMagic[8] = {'D', 'G', 'P', 'O', 'T', 'E', 'N', 'S'};
constexpr std::size_t kHeaderBytes = 8 + 4 * 8;

using Kind = CheckpointError::Kind;

class Writer {
 public:
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void doubles(std::span<const double> xs) { raw(xs.data(), xs.size_bytes()); }

  void finish(const std::string& path) {
    u64(util::Digest{}.update(buf_).value());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::kIo, "cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw CheckpointError(Kind::kIo, "write failed for '" + path + "'");
  }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string buf, std::string path) : buf_(std::move(buf)), path_(std::move(path)) {}

  void take(void* p, std::size_t n) {
    if (pos_ + n > limit()) {
      throw CheckpointError(Kind::kCorrupt, "'" + path_ + "' truncated at offset " + std::to_string(pos_));
    }
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    take(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u32();
    if (n > limit() - pos_) {
      throw CheckpointError(Kind::kCorrupt, "'" + path_ + "' string length overruns file at offset " +
                                                std::to_string(pos_));
    }
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::uint64_t count) {
    if (count > (limit() - pos_) / sizeof(double)) {
      throw CheckpointError(Kind::kCorrupt, "'" + path_ + "' tensor overruns file at offset " +
                                                std::to_string(pos_));
    }
    std::vector<double> v(count);
    take(v.data(), count * sizeof(double));
    return v;
  }
  void check_magic(const char (&magic)[8]) {
    char m[8];
    if (buf_.size() < 8) throw CheckpointError(Kind::kBadMagic, "'" + path_ + "' is too short");
    take(m, 8);
    if (std::memcmp(m, magic, 8) != 0) {
      throw CheckpointError(Kind::kBadMagic, "'" + path_ + "' has bad magic bytes");
    }
  }
  void verify_trailer() {
    if (buf_.size() < 16) throw CheckpointError(Kind::kCorrupt, "'" + path_ + "' truncated");
    std::uint64_t stored;
    std::memcpy(&stored, buf_.data() + buf_.size() - 8, 8);
    const auto actual = util::Digest{}.update(std::string_view(buf_).substr(0, buf_.size() - 8)).value();
    if (stored != actual) throw CheckpointError(Kind::kCorrupt, "'" + path_ + "' failed checksum");
  }
  void expect_end() {
    if (pos_ != limit()) {
      throw CheckpointError(Kind::kCorrupt, "'" + path_ + "' has trailing bytes at offset " + std::to_string(pos_));
    }
  }

 private:
  std::size_t limit() const { return buf_.size() >= 8 ? buf_.size() - 8 : 0; }
  std::string buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path, std::size_t max_bytes = SIZE_MAX) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::kIo, "cannot open '" + path + "'");
  std::string buf;
  if (max_bytes == SIZE_MAX) {
    buf.assign(std::istreambuf_iterator<char>(in), {});
  } else {
    buf.resize(max_bytes);
    in.read(buf.data(), static_cast<std::streamsize>(max_bytes));
    buf.resize(static_cast<std::size_t>(in.gcount()));
  }
  return buf;
}

CheckpointHeader read_header(Reader& r) {
  r.check_magic(kModelMagic);
  CheckpointHeader h;
  h.version = r.u32();
  if (h.version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersionMismatch, "checkpoint version " + std::to_string(h.version) +
                                                      " unsupported (expected " +
                                                      std::to_string(kCheckpointVersion) + ")");
  }
  h.config.vocab_size = r.u32();
  h.config.layers = r.u32();
  h.config.width = r.u32();
  h.config.heads = r.u32();
  h.config.context = r.u32();
  h.config.ffn_mult = r.u32();
  h.tensor_count = r.u32();
  return h;
}

}  // namespace

void save_checkpoint(const PolicyModel& model, const std::string& path) {
  Writer w;
  w.raw(kModelMagic, 8);
  w.u32(kCheckpointVersion);
  const auto& c = model.config();
  for (auto v : {c.vocab_size, c.layers, c.width, c.heads, c.context, c.ffn_mult}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& p : model.parameters()) {
    w.str(p.name);
    w.str(p.group);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u64(d);
    w.doubles(p.value.values());
  }
  w.finish(path);
}

PolicyModel load_checkpoint(const std::string& path, std::optional<std::size_t> expected_vocab) {
  auto buf = read_file(path);
  {
    // Header first, so files from other format revisions report a version
    // error rather than a checksum failure.
    std::string head = buf.substr(0, std::min(buf.size(), kHeaderBytes));
    head.append(8, '\0');
    Reader peek(std::move(head), path);
    read_header(peek);
  }
  Reader hr(std::move(buf), path);
  hr.verify_trailer();
  const auto header = read_header(hr);
  if (expected_vocab && header.config.vocab_size != *expected_vocab) {
    throw CheckpointError(Kind::kConfigMismatch, "checkpoint vocabulary size " +
                                                     std::to_string(header.config.vocab_size) +
                                                     " does not match expected " +
                                                     std::to_string(*expected_vocab));
  }
  std::vector<numerics::NamedParameter> params;
  for (std::uint32_t i = 0; i < header.tensor_count; ++i) {
    numerics::NamedParameter p;
    p.name = hr.str();
    p.group = hr.str();
    const auto rank = hr.u32();
    if (rank > 8) throw CheckpointError(Kind::kCorrupt, "'" + path + "' tensor rank " + std::to_string(rank));
    numerics::Shape shape(rank);
    for (auto& d : shape) d = hr.u64();
    p.value = numerics::DiffArray::parameter(shape, hr.doubles(numerics::shape_size(shape)));
    params.push_back(std::move(p));
  }
  hr.expect_end();
  try {
    return PolicyModel(header.config, std::move(params));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::kCorrupt, "'" + path + "': " + e.what());
  }
}

CheckpointHeader inspect_checkpoint(const std::string& path) {
  auto buf = read_file(path, kHeaderBytes);
  // Header-only reads have no trailer; pad the reader limit.
  buf.append(8, '\0');
  Reader r(std::move(buf), path);
  return read_header(r);
}

void save_tensors(const std::string& path, const std::vector<std::string>& names,
                  const std::vector<std::vector<double>>& tensors) {
  if (names.size() != tensors.size()) throw std::invalid_argument("save_tensors: names/tensors mismatch");
  Writer w;
  w.raw(kTensorMagic, 8);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    w.str(names[i]);
    w.u64(tensors[i].size());
    w.doubles(tensors[i]);
  }
  w.finish(path);
}

std::vector<std::vector<double>> load_tensors(const std::string& path) {
  Reader r(read_file(path), path);
  r.verify_trailer();
  r.check_magic(kTensorMagic);
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersionMismatch, "tensor file version " + std::to_string(version));
  }
  const auto n = r.u32();
  std::vector<std::vector<double>> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    (void)r.str();
    out.push_back(r.doubles(r.u64()));
  }
  r.expect_end();
  return out;
}

}  // namespace dgpo::langmodel
