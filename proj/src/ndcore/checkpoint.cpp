#include "mlvae/ndcore/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

namespace mlvae::nd {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::uint8_t buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
  out.insert(out.end(), buf, buf + sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    std::uint8_t buf[sizeof(U)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(U));
    pos_ += sizeof(U);
    U v;
    std::memcpy(&v, buf, sizeof(U));
    return v;
  }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint: truncated data");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize(const ParamStore<T>& store) {
  std::vector<std::uint8_t> out{'M', 'L', 'V', '1'};
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  constexpr DType dtype = std::is_same_v<T, float> ? DType::F32 : DType::F64;
  for (const auto& e : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (auto d : e.value.shape()) put<std::uint64_t>(out, d);
    for (T v : e.value.data()) put<T>(out, v);
  }
  return out;
}

template <typename T>
ParamStore<T> deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.text(4) != "MLV1") throw IoError("checkpoint: bad magic bytes");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = in.get<std::uint32_t>();
  ParamStore<T> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = in.text(in.get<std::uint32_t>());
    const auto dtype = in.get<std::uint32_t>();
    if (dtype > 1) throw IoError("checkpoint: unknown dtype code " + std::to_string(dtype) + " for '" + name + "'");
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    std::vector<T> data(shape_size(shape));
    for (auto& v : data) {
      v = dtype == 0 ? static_cast<T>(in.get<float>()) : static_cast<T>(in.get<double>());
    }
    store.add(name, DenseArray<T>(std::move(shape), std::move(data)));
  }
  if (!in.done()) throw IoError("checkpoint: trailing bytes");
  return store;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamStore<T>& store) {
  const auto bytes = serialize(store);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to '" + path.string() + "'");
}

template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path) {
  return deserialize<T>(read_file_bytes(path));
}

template <typename T>
void assign_values(ParamStore<T>& target, const ParamStore<T>& source) {
  for (auto& e : target.entries()) {
    if (!source.contains(e.name)) throw IoError("checkpoint: missing parameter '" + e.name + "'");
    const auto& v = source.value(e.name);
    if (v.shape() != e.value.shape()) {
      throw DimensionError("checkpoint: '" + e.name + "' has shape " + shape_string(v.shape()) + ", model expects " +
                           shape_string(e.value.shape()));
    }
    e.value = v;
  }
}

#define MLVAE_INSTANTIATE(T)                                                                \
  template std::vector<std::uint8_t> serialize<T>(const ParamStore<T>&);                   \
  template ParamStore<T> deserialize<T>(const std::vector<std::uint8_t>&);                 \
  template void save_checkpoint<T>(const std::filesystem::path&, const ParamStore<T>&);    \
  template ParamStore<T> load_checkpoint<T>(const std::filesystem::path&);                 \
  template void assign_values<T>(ParamStore<T>&, const ParamStore<T>&);
MLVAE_INSTANTIATE(float)
MLVAE_INSTANTIATE(double)
#undef MLVAE_INSTANTIATE

}  // namespace mlvae::nd
