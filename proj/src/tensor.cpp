#include "ldmshield/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ldms {

namespace {
std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};
}  // namespace

std::size_t tracked_bytes() { return g_live_bytes.load(); }
std::size_t peak_tracked_bytes() { return g_peak_bytes.load(); }
void reset_peak_tracked_bytes() { g_peak_bytes.store(g_live_bytes.load()); }

namespace detail {
void track_alloc(std::size_t bytes) {
    std::size_t now = g_live_bytes.fetch_add(bytes) + bytes;
    std::size_t peak = g_peak_bytes.load();
    while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
    }
}
void track_free(std::size_t bytes) { g_live_bytes.fetch_sub(bytes); }
}  // namespace detail

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor Tensor::from(std::vector<int> shape, std::initializer_list<double> vals) {
    Tensor t(std::move(shape));
    if (vals.size() != t.size()) throw std::invalid_argument("initializer size mismatch");
    std::copy(vals.begin(), vals.end(), t.data());
    return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::min() const {
    return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
    return *std::max_element(data_.begin(), data_.end());
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != size()) throw std::invalid_argument("reshape changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
}

}  // namespace ldms
