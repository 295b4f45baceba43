// SPDX-License-Identifier: Apache-2.0
#include "fairgen/checkpoint.hpp"

#include <cstring>
#include <sstream>

#include "fairgen/io.hpp"

namespace fairgen {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'F', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& s, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(s, bits);
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& what)
      : buf_(buf), what_(what) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(bytes(4)); }
  std::uint64_t u64() { return bytes(8); }

  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  const std::string& buf_;
  std::string what_;
  std::size_t pos_ = 0;

  void need(std::size_t n) {
    if (pos_ + n > buf_.size())
      throw ArtifactError(what_ + ": truncated checkpoint");
  }

  std::uint64_t bytes(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i]))
           << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

const Tensor& Checkpoint::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw ContractError("checkpoint has no entry: " + name);
  return *t;
}

void save_checkpoint(const std::filesystem::path& path,
                     const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::string buf;
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u64(buf, meta.config_hash);
  put_u64(buf, meta.vocab_hash);
  put_u32(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<std::uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i)
      put_u64(buf, static_cast<std::uint64_t>(t.dim(i)));
  }
  for (const auto& [name, t] : entries)
    for (double v : t.data()) put_f64(buf, v);
  atomic_write(path, buf);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ArtifactError(path.string() + ": checkpoint not found");
  const std::string buf = read_file(path);
  Reader r(buf, path.string());
  if (r.str(4) != std::string(kMagic, 4))
    throw ArtifactError(path.string() + ": not a checkpoint file");
  Checkpoint ckpt;
  ckpt.meta.version = r.u32();
  if (ckpt.meta.version != kVersion)
    throw ArtifactError(path.string() + ": unsupported checkpoint version " +
                        std::to_string(ckpt.meta.version));
  ckpt.meta.config_hash = r.u64();
  ckpt.meta.vocab_hash = r.u64();
  const std::uint32_t n = r.u32();
  std::vector<Shape> shapes;
  shapes.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    if (ndim > 2)
      throw ArtifactError(path.string() + ": entry rank out of range");
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint64_t dim = r.u64();
      if (dim == 0 || dim > (1u << 30))
        throw ArtifactError(path.string() + ": entry dimension out of range");
      shape.push_back(static_cast<int>(dim));
    }
    shapes.push_back(shape);
    ckpt.entries.emplace_back(std::move(name), Tensor());
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    Tensor t = Tensor::zeros(shapes[i]);
    for (double& v : t.data()) v = r.f64();
    ckpt.entries[i].second = t;
  }
  if (!r.done())
    throw ArtifactError(path.string() + ": trailing bytes after payload");
  return ckpt;
}

void require_hashes(const Checkpoint& ckpt, std::uint64_t config_hash,
                    std::uint64_t vocab_hash) {
  if (ckpt.meta.config_hash != config_hash)
    throw ConfigError("checkpoint was written under a different model config");
  if (ckpt.meta.vocab_hash != vocab_hash)
    throw ConfigError("checkpoint was written under a different vocabulary");
}

}  // namespace fairgen
