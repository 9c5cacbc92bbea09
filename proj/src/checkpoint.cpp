#include "mimnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mimnet/error.hpp"

namespace mimnet {

namespace {

template <class T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  template <class T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("checkpoint " + path_.string() + " is truncated");
  }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void ModelBundle::put(std::string name, Tensor value) {
  for (auto& [n, t] : tensors) {
    if (n == name) {
      t = std::move(value);
      return;
    }
  }
  tensors.emplace_back(std::move(name), std::move(value));
}

const Tensor* ModelBundle::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor& ModelBundle::get(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw FormatError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, bundle.dim);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.tensors.size()));
  for (const auto& [name, t] : bundle.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto extent : t.shape()) put_le<std::uint64_t>(out, extent);
  }
  for (const auto& entry : bundle.tensors) {
    for (double v : entry.second.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }

  // Write-then-rename so a failed save never leaves a half-written checkpoint.
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("error while writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

ModelBundle load_checkpoint(const std::filesystem::path& path, std::optional<std::uint32_t> expected_dim) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader in(bytes, path);
  if (in.str(4) != std::string(kCheckpointMagic, 4)) throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  const auto version = in.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  ModelBundle bundle;
  bundle.dim = in.le<std::uint32_t>();
  if (expected_dim && *expected_dim != bundle.dim) {
    throw FormatError("checkpoint dimension d=" + std::to_string(bundle.dim) + " does not match expected d=" +
                      std::to_string(*expected_dim));
  }
  const auto count = in.le<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.le<std::uint32_t>();
    std::string name = in.str(name_len);
    const auto rank = in.le<std::uint32_t>();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint tensor '" + name + "' has invalid rank");
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (auto& extent : shape) {
      extent = static_cast<std::size_t>(in.le<std::uint64_t>());
      if (extent == 0) throw FormatError("checkpoint tensor '" + name + "' has a zero extent");
      elements *= extent;
      if (elements > in.remaining()) throw FormatError("checkpoint " + path.string() + " is truncated");
    }
    manifest.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : manifest) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    in.need(n * sizeof(double));
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(in.le<std::uint64_t>());
    bundle.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (in.remaining() != 0) throw FormatError("checkpoint " + path.string() + " has trailing bytes");
  return bundle;
}

}  // namespace mimnet
