#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace liteheart {

using Index = std::int64_t;

// Byte-level tracking of tensor buffers, used by the peak-memory bench.
// Tracking is per-thread; GEMM worker threads never allocate tensors.
namespace memtrack {

struct Counters {
  std::int64_t current = 0;
  std::int64_t peak = 0;
  bool enabled = false;
};

inline Counters& counters() {
  thread_local Counters c;
  return c;
}

inline void on_alloc(std::int64_t bytes) {
  Counters& c = counters();
  if (!c.enabled) return;
  c.current += bytes;
  if (c.current > c.peak) c.peak = c.current;
}

inline void on_free(std::int64_t bytes) {
  Counters& c = counters();
  if (!c.enabled) return;
  c.current -= bytes;
}

inline void begin() {
  Counters& c = counters();
  c.current = 0;
  c.peak = 0;
  c.enabled = true;
}

inline std::int64_t end() {
  Counters& c = counters();
  c.enabled = false;
  return c.peak;
}

}  // namespace memtrack

template <class T>
struct TrackingAllocator {
  using value_type = T;
  TrackingAllocator() = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) {}

  T* allocate(std::size_t n) {
    memtrack::on_alloc(static_cast<std::int64_t>(n * sizeof(T)));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) {
    memtrack::on_free(static_cast<std::int64_t>(n * sizeof(T)));
    ::operator delete(p);
  }
  bool operator==(const TrackingAllocator&) const { return true; }
  bool operator!=(const TrackingAllocator&) const { return false; }
};

/// Dense row-major n-d array. Covers the 1-3 dims this project needs;
/// no views, no broadcasting.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(count(shape_)), T(0));
  }
  Tensor(std::initializer_list<Index> shape) : Tensor(std::vector<Index>(shape)) {}

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<Index> shape, T v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index numel() const { return static_cast<Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(Index i, Index j) { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
  const T& at(Index i, Index j) const { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
  T& at(Index i, Index j, Index k) {
    return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
  }
  const T& at(Index i, Index j, Index k) const {
    return data_[static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k)];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  Tensor reshaped(std::vector<Index> shape) const {
    if (count(shape) != numel()) throw std::invalid_argument("Tensor::reshaped: numel mismatch");
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (Index i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  static Index count(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<Index> shape_;
  std::vector<T, TrackingAllocator<T>> data_;
};

inline std::string shape_str(const std::vector<Index>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace liteheart
