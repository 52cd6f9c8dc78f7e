#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ldmshield/tensor.hpp"

namespace ldms::ad {

// Named parameter set. Gradients accumulate here (not on the tape), which
// keeps checkpointed re-execution and multi-tape training steps simple.
class ParamStore {
public:
    bool has(const std::string& name) const { return values_.count(name) != 0; }
    Tensor& create(const std::string& name, Tensor init);
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);  // lazily zero-initialized
    bool has_grad(const std::string& name) const { return grads_.count(name) != 0; }

    void freeze(const std::string& name) { frozen_.insert(name); }
    void unfreeze(const std::string& name) { frozen_.erase(name); }
    void freeze_all();
    void unfreeze_all() { frozen_.clear(); }
    bool trainable(const std::string& name) const { return frozen_.count(name) == 0; }
    void remove(const std::string& name);

    void zero_grads() { grads_.clear(); }
    std::vector<std::string> names() const;
    std::vector<std::string> trainable_names() const;
    std::size_t total_size() const;

private:
    std::map<std::string, Tensor> values_;
    std::map<std::string, Tensor> grads_;
    std::set<std::string> frozen_;
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Ops append nodes; backward() walks them in reverse.
// With grad disabled the tape only carries values. In recompute mode,
// checkpoint() stores segment boundaries and re-runs segment forwards during
// backward, trading time for peak memory.
class Tape {
public:
    explicit Tape(bool grad_enabled = true, bool recompute = false)
        : grad_enabled_(grad_enabled), recompute_(recompute) {}

    bool grad_enabled() const { return grad_enabled_; }
    bool recompute() const { return recompute_; }

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    Var param(ParamStore& store, const std::string& name);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    // elementwise / scalar
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var add_scaled(Var a, Var b, double s);  // a + s*b
    Var scale(Var a, double s);
    Var silu(Var a);

    // dense / conv
    Var matmul(Var a, Var b);
    Var conv2d(Var x, Var w, Var bias, int pad, int stride);  // bias optional: Var{}
    Var patch_unproject(Var z, Var w, int k);

    // shape / structure
    Var avg_pool2(Var x);
    Var upsample2(Var x);
    Var concat_c(Var a, Var b);
    Var add_channel(Var x, Var v);  // (H,W,C) + (C,) broadcast
    Var reshape(Var x, std::vector<int> shape);
    Var embed_row(ParamStore& store, const std::string& name, int row);

    // norm / losses
    Var group_norm(Var x, Var gamma, Var beta, int groups, double eps);
    Var sum_squares(Var x);              // -> scalar
    Var sum_squares_diff(Var a, Var b);  // ||a - b||^2 -> scalar

    using SegmentFn = std::function<Var(Tape&, const std::vector<Var>&)>;
    Var checkpoint(const SegmentFn& fn, std::vector<Var> inputs);

    void backward(Var root, const Tensor* seed = nullptr);

    std::size_t num_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool is_param = false;
        ParamStore* store = nullptr;
        std::string pname;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backward;
    };

    int push(Tensor value, std::vector<int> parents, bool requires_grad);
    Tensor& grad_buf(int id);
    void add_grad(int id, const Tensor& g);

    std::vector<Node> nodes_;
    std::map<std::pair<const ParamStore*, std::string>, int> param_cache_;
    bool grad_enabled_;
    bool recompute_;
};

// Convenience: evaluate fn's scalar output and the gradient w.r.t. input x.
struct ValueGrad {
    double value;
    Tensor grad;
};
ValueGrad value_and_input_grad(const std::function<Var(Tape&, Var)>& fn, const Tensor& x,
                               bool recompute = false);

}  // namespace ldms::ad
