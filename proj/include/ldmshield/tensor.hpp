#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldms {

// Live/peak byte counters for all Tensor storage. The attack engine's
// memory-mode contract is verified against these.
std::size_t tracked_bytes();
std::size_t peak_tracked_bytes();
void reset_peak_tracked_bytes();

namespace detail {
void track_alloc(std::size_t bytes);
void track_free(std::size_t bytes);
}  // namespace detail

template <class T>
struct TrackingAllocator {
    using value_type = T;
    TrackingAllocator() = default;
    template <class U>
    TrackingAllocator(const TrackingAllocator<U>&) {}
    T* allocate(std::size_t n) {
        detail::track_alloc(n * sizeof(T));
        return static_cast<T*>(::operator new(n * sizeof(T)));
    }
    void deallocate(T* p, std::size_t n) noexcept {
        detail::track_free(n * sizeof(T));
        ::operator delete(p);
    }
    bool operator==(const TrackingAllocator&) const { return true; }
    bool operator!=(const TrackingAllocator&) const { return false; }
};

using Storage = std::vector<double, TrackingAllocator<double>>;

// Dense row-major double tensor. Images and latents are (H, W, C);
// matrices are (rows, cols); conv weights are (kh, kw, cin, cout).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, double fill);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, v); }
    static Tensor from(std::vector<int> shape, std::initializer_list<double> vals);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // (row, col) for rank-2, (y, x, c) for rank-3
    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
    double& at(int y, int x, int c) {
        return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
    }
    double at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * shape_[1] + x) * shape_[2] + c];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    void fill(double v);
    bool all_finite() const;
    double min() const;
    double max() const;

    Tensor reshaped(std::vector<int> shape) const;

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    Storage data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace ldms
