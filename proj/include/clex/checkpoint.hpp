#pragma once

// Binary checkpoint: "CLEX", u32 version, u32 kind, u32 context_dim,
// f32 t_A, f32 t_L, u32 tensor count, then per tensor
// u32 name length, name bytes, u32 rank, u32 dims[rank], f32 data (row-major).
// All integers and floats little-endian.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cnn.hpp"
#include "common.hpp"
#include "model.hpp"

namespace clex {

inline constexpr char kCheckpointMagic[4] = {'C', 'L', 'E', 'X'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind : std::uint32_t { Cnn = 1, Linear = 2 };

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

struct Checkpoint {
  ModelKind kind = ModelKind::Cnn;
  std::uint32_t context_dim = 0;
  Thresholds thresholds;
  std::map<std::string, Tensor> tensors;  // written in name order
};

namespace detail {

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(sizeof(T) == 4);
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                              static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

template <class T>
T get_le(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ValidationError("truncated checkpoint (" + what + ")");
  const std::uint32_t u = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  T v;
  std::memcpy(&v, &u, 4);
  return v;
}

template <class M>
Tensor to_tensor(const M& m) {
  Tensor t;
  if constexpr (M::ColsAtCompileTime == 1) {
    t.dims = {static_cast<std::uint32_t>(m.size())};
    for (Eigen::Index i = 0; i < m.size(); ++i) t.data.push_back(static_cast<float>(m(i)));
  } else {
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(static_cast<float>(m(i, j)));
  }
  return t;
}

inline const Tensor& need(const Checkpoint& c, const std::string& name, std::size_t rank) {
  auto it = c.tensors.find(name);
  if (it == c.tensors.end()) throw ValidationError("checkpoint missing tensor " + name);
  if (it->second.dims.size() != rank) throw ValidationError("checkpoint tensor " + name + " has wrong rank");
  return it->second;
}

template <class M>
void from_tensor(const Checkpoint& c, const std::string& name, M& m) {
  if constexpr (M::ColsAtCompileTime == 1) {
    const auto& t = need(c, name, 1);
    m.resize(t.dims[0]);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = t.data[static_cast<std::size_t>(i)];
  } else {
    const auto& t = need(c, name, 2);
    m.resize(t.dims[0], t.dims[1]);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[k++];
  }
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, 4);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint32_t>(c.kind));
  detail::put_le(out, c.context_dim);
  detail::put_le(out, static_cast<float>(c.thresholds.t_A));
  detail::put_le(out, static_cast<float>(c.thresholds.t_L));
  detail::put_le(out, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.data.size()) throw ValidationError("tensor " + name + " shape does not match data");
    detail::put_le(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_le(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_le(out, d);
    for (float v : t.data) detail::put_le(out, v);
  }
  if (!out) throw RuntimeError("failed writing checkpoint: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read checkpoint: " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ValidationError("not a checkpoint file: " + path.string());
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto kind = detail::get_le<std::uint32_t>(in, "kind");
  if (kind != 1 && kind != 2) throw ValidationError("unknown model kind in checkpoint");
  c.kind = static_cast<ModelKind>(kind);
  c.context_dim = detail::get_le<std::uint32_t>(in, "context_dim");
  c.thresholds.t_A = detail::get_le<float>(in, "t_A");
  c.thresholds.t_L = detail::get_le<float>(in, "t_L");
  const auto count = detail::get_le<std::uint32_t>(in, "tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::get_le<std::uint32_t>(in, "name length");
    if (len > 4096) throw ValidationError("corrupt tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ValidationError("truncated checkpoint (name)");
    const auto rank = detail::get_le<std::uint32_t>(in, "rank");
    if (rank > 8) throw ValidationError("corrupt tensor rank");
    Tensor t;
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(detail::get_le<std::uint32_t>(in, "dims"));
      n *= t.dims.back();
    }
    if (n > (1ull << 32)) throw ValidationError("corrupt tensor size");
    t.data.resize(n);
    for (auto& v : t.data) v = detail::get_le<float>(in, name);
    c.tensors.emplace(std::move(name), std::move(t));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes in checkpoint");
  return c;
}

inline void put_cnn(Checkpoint& c, const std::string& prefix, const CnnParams<float>& p) {
  c.tensors[prefix + ".embedding"] = detail::to_tensor(p.embedding);
  c.tensors[prefix + ".conv1.weight"] = detail::to_tensor(p.conv1_w);
  c.tensors[prefix + ".conv1.bias"] = detail::to_tensor(p.conv1_b);
  c.tensors[prefix + ".conv2.weight"] = detail::to_tensor(p.conv2_w);
  c.tensors[prefix + ".conv2.bias"] = detail::to_tensor(p.conv2_b);
  c.tensors[prefix + ".dense.weight"] = detail::to_tensor(p.dense_w);
  c.tensors[prefix + ".dense.bias"] = detail::to_tensor(p.dense_b);
  c.tensors[prefix + ".out.weight"] = detail::to_tensor(p.out_w);
  c.tensors[prefix + ".out.bias"] = Tensor{{1}, {p.out_b}};
}

inline CnnParams<float> get_cnn(const Checkpoint& c, const std::string& prefix) {
  CnnParams<float> p;
  detail::from_tensor(c, prefix + ".embedding", p.embedding);
  detail::from_tensor(c, prefix + ".conv1.weight", p.conv1_w);
  detail::from_tensor(c, prefix + ".conv1.bias", p.conv1_b);
  detail::from_tensor(c, prefix + ".conv2.weight", p.conv2_w);
  detail::from_tensor(c, prefix + ".conv2.bias", p.conv2_b);
  detail::from_tensor(c, prefix + ".dense.weight", p.dense_w);
  detail::from_tensor(c, prefix + ".dense.bias", p.dense_b);
  detail::from_tensor(c, prefix + ".out.weight", p.out_w);
  const auto& b = detail::need(c, prefix + ".out.bias", 1);
  if (b.data.size() != 1) throw ValidationError("bad output bias tensor");
  p.out_b = b.data[0];
  p.context_dim = static_cast<Eigen::Index>(c.context_dim);
  const auto E = p.embedding.cols(), F = p.conv1_w.rows();
  if (p.conv1_w.cols() != E || p.conv2_w.rows() != F || p.conv2_w.cols() != 2 * E || p.conv1_b.size() != F ||
      p.conv2_b.size() != F || p.dense_w.rows() != 2 * F || p.dense_b.size() != p.dense_w.cols() ||
      p.out_w.size() != p.dense_w.cols() + p.context_dim)
    throw ValidationError("inconsistent CNN tensor shapes in checkpoint");
  if (!p.all_finite()) throw ValidationError("non-finite CNN parameters in checkpoint");
  return p;
}

/// The cascade pair: one-vs-rest Aggression and Loss networks plus thresholds.
struct CnnPair {
  CnnParams<float> aggression;
  CnnParams<float> loss;
  Thresholds thresholds;
};

inline Checkpoint to_checkpoint(const CnnPair& m) {
  Checkpoint c;
  c.kind = ModelKind::Cnn;
  c.context_dim = static_cast<std::uint32_t>(m.aggression.context_dim);
  c.thresholds = m.thresholds;
  put_cnn(c, "a", m.aggression);
  put_cnn(c, "l", m.loss);
  return c;
}

inline CnnPair cnn_from_checkpoint(const Checkpoint& c) {
  if (c.kind != ModelKind::Cnn) throw ValidationError("checkpoint does not hold a CNN");
  return {get_cnn(c, "a"), get_cnn(c, "l"), c.thresholds};
}

inline Checkpoint to_checkpoint(const LinearModel& m, std::uint32_t context_dim) {
  Checkpoint c;
  c.kind = ModelKind::Linear;
  c.context_dim = context_dim;
  c.thresholds = {0, 0};
  c.tensors["linear.weight"] = detail::to_tensor(Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>(m.weights()));
  c.tensors["linear.bias"] = detail::to_tensor(m.bias());
  Eigen::VectorXd cw(kNumLabels);
  for (std::size_t i = 0; i < kNumLabels; ++i) cw(i) = m.class_weights()[static_cast<std::size_t>(i)];
  c.tensors["linear.class_weights"] = detail::to_tensor(cw);
  return c;
}

inline LinearModel linear_from_checkpoint(const Checkpoint& c) {
  if (c.kind != ModelKind::Linear) throw ValidationError("checkpoint does not hold a linear model");
  Eigen::MatrixXd w;
  Eigen::VectorXd b, cw;
  detail::from_tensor(c, "linear.weight", w);
  detail::from_tensor(c, "linear.bias", b);
  detail::from_tensor(c, "linear.class_weights", cw);
  if (cw.size() != kNumLabels) throw ValidationError("bad class weight tensor");
  return LinearModel(std::move(w), std::move(b), {cw(0), cw(1), cw(2)});
}

}  // namespace clex
