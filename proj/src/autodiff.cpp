#include "ldmshield/autodiff.hpp"

#include <stdexcept>

#include "ldmshield/kernels.hpp"

namespace ldms::ad {

// ---------------------------------------------------------------- ParamStore

Tensor& ParamStore::create(const std::string& name, Tensor init) {
    auto [it, fresh] = values_.emplace(name, std::move(init));
    if (!fresh) throw std::invalid_argument("parameter already exists: " + name);
    return it->second;
}

Tensor& ParamStore::value(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::value(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

Tensor& ParamStore::grad(const std::string& name) {
    auto it = grads_.find(name);
    if (it == grads_.end()) it = grads_.emplace(name, Tensor(value(name).shape())).first;
    return it->second;
}

void ParamStore::freeze_all() {
    for (auto& [name, v] : values_) frozen_.insert(name);
}

void ParamStore::remove(const std::string& name) {
    values_.erase(name);
    grads_.erase(name);
    frozen_.erase(name);
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (auto& [name, v] : values_) out.push_back(name);
    return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
    std::vector<std::string> out;
    for (auto& [name, v] : values_)
        if (trainable(name)) out.push_back(name);
    return out;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (auto& [name, v] : values_) n += v.size();
    return n;
}

// ---------------------------------------------------------------------- Tape

int Tape::push(Tensor value, std::vector<int> parents, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = grad_enabled_ && requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape());
    return n.grad;
}

void Tape::add_grad(int id, const Tensor& g) {
    Tensor& buf = grad_buf(id);
    kern::acc_scaled(buf.size(), 1.0, g.data(), buf.data());
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) throw std::logic_error("gradient not populated; run backward first");
    return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    return Var{push(std::move(value), {}, requires_grad)};
}

Var Tape::param(ParamStore& store, const std::string& name) {
    auto key = std::make_pair(static_cast<const ParamStore*>(&store), name);
    auto it = param_cache_.find(key);
    if (it != param_cache_.end()) return Var{it->second};
    int id = push(store.value(name), {}, store.trainable(name));
    nodes_[id].is_param = true;
    nodes_[id].store = &store;
    nodes_[id].pname = name;
    param_cache_[key] = id;
    return Var{id};
}

namespace {
bool any_requires(const Tape& t, std::initializer_list<Var> vars) {
    for (Var v : vars)
        if (v.valid() && t.requires_grad(v)) return true;
    return false;
}
}  // namespace

Var Tape::add(Var a, Var b) { return add_scaled(a, b, 1.0); }

Var Tape::sub(Var a, Var b) { return add_scaled(a, b, -1.0); }

Var Tape::add_scaled(Var a, Var b, double s) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    Tensor out(av.shape());
    kern::axpby(out.size(), 1.0, av.data(), s, bv.data(), out.data());
    int id = push(std::move(out), {a.id, b.id}, any_requires(*this, {a, b}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [a, b, s](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            if (t.nodes_[a.id].requires_grad) t.add_grad(a.id, g);
            if (t.nodes_[b.id].requires_grad)
                kern::acc_scaled(g.size(), s, g.data(), t.grad_buf(b.id).data());
        };
    return Var{id};
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
    Tensor out(av.shape());
    kern::mul(out.size(), av.data(), bv.data(), out.data());
    int id = push(std::move(out), {a.id, b.id}, any_requires(*this, {a, b}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [a, b](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            if (t.nodes_[a.id].requires_grad)
                kern::acc_mul(g.size(), g.data(), t.value(b).data(), t.grad_buf(a.id).data());
            if (t.nodes_[b.id].requires_grad)
                kern::acc_mul(g.size(), g.data(), t.value(a).data(), t.grad_buf(b.id).data());
        };
    return Var{id};
}

Var Tape::scale(Var a, double s) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    kern::scale(out.size(), s, av.data(), out.data());
    int id = push(std::move(out), {a.id}, any_requires(*this, {a}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [a, s](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            kern::acc_scaled(g.size(), s, g.data(), t.grad_buf(a.id).data());
        };
    return Var{id};
}

Var Tape::silu(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    kern::silu(out.size(), av.data(), out.data());
    int id = push(std::move(out), {a.id}, any_requires(*this, {a}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [a](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            kern::silu_bwd(g.size(), t.value(a).data(), g.data(), t.grad_buf(a.id).data());
        };
    return Var{id};
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + av.shape_str() + " x " +
                                    bv.shape_str());
    int M = av.dim(0), K = av.dim(1), N = bv.dim(1);
    Tensor out({M, N});
    kern::matmul(M, K, N, av.data(), bv.data(), out.data());
    int id = push(std::move(out), {a.id, b.id}, any_requires(*this, {a, b}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [a, b, M, K, N](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            if (t.nodes_[a.id].requires_grad)
                kern::matmul_nt_acc(M, K, N, g.data(), t.value(b).data(), t.grad_buf(a.id).data());
            if (t.nodes_[b.id].requires_grad)
                kern::matmul_tn_acc(M, K, N, t.value(a).data(), g.data(), t.grad_buf(b.id).data());
        };
    return Var{id};
}

Var Tape::conv2d(Var x, Var w, Var bias, int pad, int stride) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    if (xv.rank() != 3 || wv.rank() != 4) throw std::invalid_argument("conv2d: bad ranks");
    int H = xv.dim(0), W = xv.dim(1), Ci = xv.dim(2);
    int kh = wv.dim(0), kw = wv.dim(1), Co = wv.dim(3);
    if (wv.dim(2) != Ci) throw std::invalid_argument("conv2d: channel mismatch");
    int Ho = (H + 2 * pad - kh) / stride + 1;
    int Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor out({Ho, Wo, Co});
    const double* bptr = bias.valid() ? value(bias).data() : nullptr;
    kern::conv2d(H, W, Ci, Co, kh, kw, pad, stride, xv.data(), wv.data(), bptr, out.data());
    std::vector<int> parents = {x.id, w.id};
    if (bias.valid()) parents.push_back(bias.id);
    bool req = any_requires(*this, {x, w}) || (bias.valid() && requires_grad(bias));
    int id = push(std::move(out), std::move(parents), req);
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [x, w, bias, H, W, Ci, Co, kh, kw, pad, stride](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            if (t.nodes_[x.id].requires_grad)
                kern::conv2d_bwd_input(H, W, Ci, Co, kh, kw, pad, stride, g.data(),
                                       t.value(w).data(), t.grad_buf(x.id).data());
            bool need_w = t.nodes_[w.id].requires_grad;
            bool need_b = bias.valid() && t.nodes_[bias.id].requires_grad;
            if (need_w || need_b) {
                // weight grad kernel also covers the bias reduction
                Tensor scratch;
                double* gwp = nullptr;
                if (need_w) {
                    gwp = t.grad_buf(w.id).data();
                } else {
                    scratch = Tensor(t.value(w).shape());
                    gwp = scratch.data();
                }
                kern::conv2d_bwd_weight(H, W, Ci, Co, kh, kw, pad, stride, t.value(x).data(),
                                        g.data(), gwp,
                                        need_b ? t.grad_buf(bias.id).data() : nullptr);
            }
        };
    return Var{id};
}

Var Tape::patch_unproject(Var z, Var w, int k) {
    const Tensor& zv = value(z);
    const Tensor& wv = value(w);
    int h = zv.dim(0), ww = zv.dim(1), Cz = zv.dim(2);
    int Co = wv.dim(2);
    if (wv.dim(0) != k || wv.dim(1) != k || wv.dim(3) != Cz)
        throw std::invalid_argument("patch_unproject: weight shape mismatch");
    Tensor out({h * k, ww * k, Co});
    kern::conv2d_patch_unproject(h, ww, Cz, Co, k, zv.data(), wv.data(), out.data());
    int id = push(std::move(out), {z.id, w.id}, any_requires(*this, {z, w}));
    if (nodes_[id].requires_grad) {
        if (requires_grad(w))
            throw std::logic_error("patch_unproject: weight gradients not supported");
        nodes_[id].backward = [z, w, h, ww, Cz, Co, k](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            // d/dz is a stride-k conv of the output grad with the same weight
            Tensor gz({h, ww, Cz});
            kern::conv2d(h * k, ww * k, Co, Cz, k, k, 0, k, g.data(), t.value(w).data(), nullptr,
                         gz.data());
            t.add_grad(z.id, gz);
        };
    }
    return Var{id};
}

Var Tape::avg_pool2(Var x) {
    const Tensor& xv = value(x);
    int H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    if (H % 2 || W % 2) throw std::invalid_argument("avg_pool2: odd spatial size");
    Tensor out({H / 2, W / 2, C});
    kern::avgpool2(H, W, C, xv.data(), out.data());
    int id = push(std::move(out), {x.id}, any_requires(*this, {x}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [x, H, W, C](Tape& t, int self) {
            kern::avgpool2_bwd(H, W, C, t.nodes_[self].grad.data(), t.grad_buf(x.id).data());
        };
    return Var{id};
}

Var Tape::upsample2(Var x) {
    const Tensor& xv = value(x);
    int H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    Tensor out({2 * H, 2 * W, C});
    kern::upsample2(H, W, C, xv.data(), out.data());
    int id = push(std::move(out), {x.id}, any_requires(*this, {x}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [x, H, W, C](Tape& t, int self) {
            kern::upsample2_bwd(H, W, C, t.nodes_[self].grad.data(), t.grad_buf(x.id).data());
        };
    return Var{id};
}

Var Tape::concat_c(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.dim(0) != bv.dim(0) || av.dim(1) != bv.dim(1))
        throw std::invalid_argument("concat_c: spatial mismatch");
    int H = av.dim(0), W = av.dim(1), Ca = av.dim(2), Cb = bv.dim(2);
    Tensor out({H, W, Ca + Cb});
    std::size_t pix = static_cast<std::size_t>(H) * W;
    for (std::size_t p = 0; p < pix; ++p) {
        double* o = out.data() + p * (Ca + Cb);
        const double* pa = av.data() + p * Ca;
        const double* pb = bv.data() + p * Cb;
        for (int c = 0; c < Ca; ++c) o[c] = pa[c];
        for (int c = 0; c < Cb; ++c) o[Ca + c] = pb[c];
    }
    int id = push(std::move(out), {a.id, b.id}, any_requires(*this, {a, b}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [a, b, H, W, Ca, Cb](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            std::size_t pix = static_cast<std::size_t>(H) * W;
            if (t.nodes_[a.id].requires_grad) {
                double* ga = t.grad_buf(a.id).data();
                for (std::size_t p = 0; p < pix; ++p)
                    for (int c = 0; c < Ca; ++c) ga[p * Ca + c] += g[p * (Ca + Cb) + c];
            }
            if (t.nodes_[b.id].requires_grad) {
                double* gb = t.grad_buf(b.id).data();
                for (std::size_t p = 0; p < pix; ++p)
                    for (int c = 0; c < Cb; ++c) gb[p * Cb + c] += g[p * (Ca + Cb) + Ca + c];
            }
        };
    return Var{id};
}

Var Tape::add_channel(Var x, Var v) {
    const Tensor& xv = value(x);
    const Tensor& vv = value(v);
    int H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    if (static_cast<int>(vv.size()) != C) throw std::invalid_argument("add_channel: size mismatch");
    Tensor out(xv.shape());
    std::size_t pix = static_cast<std::size_t>(H) * W;
    for (std::size_t p = 0; p < pix; ++p)
        for (int c = 0; c < C; ++c) out[p * C + c] = xv[p * C + c] + vv[c];
    int id = push(std::move(out), {x.id, v.id}, any_requires(*this, {x, v}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [x, v, H, W, C](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            if (t.nodes_[x.id].requires_grad) t.add_grad(x.id, g);
            if (t.nodes_[v.id].requires_grad) {
                double* gv = t.grad_buf(v.id).data();
                std::size_t pix = static_cast<std::size_t>(H) * W;
                for (int c = 0; c < C; ++c) {
                    double s = 0.0;
                    for (std::size_t p = 0; p < pix; ++p) s += g[p * C + c];
                    gv[c] += s;
                }
            }
        };
    return Var{id};
}

Var Tape::reshape(Var x, std::vector<int> shape) {
    Tensor out = value(x).reshaped(shape);
    int id = push(std::move(out), {x.id}, any_requires(*this, {x}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [x](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor& gx = t.grad_buf(x.id);
            kern::acc_scaled(g.size(), 1.0, g.data(), gx.data());
        };
    return Var{id};
}

Var Tape::embed_row(ParamStore& store, const std::string& name, int row) {
    const Tensor& table = store.value(name);
    if (table.rank() != 2) throw std::invalid_argument("embed_row: table must be rank 2");
    if (row < 0 || row >= table.dim(0)) throw std::out_of_range("embed_row: row out of range");
    int D = table.dim(1);
    Tensor out({D});
    for (int i = 0; i < D; ++i) out[i] = table.at(row, i);
    int id = push(std::move(out), {}, store.trainable(name));
    if (nodes_[id].requires_grad) {
        ParamStore* sp = &store;
        nodes_[id].backward = [sp, name, row, D](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor& gt = sp->grad(name);
            for (int i = 0; i < D; ++i) gt.at(row, i) += g[i];
        };
    }
    return Var{id};
}

Var Tape::group_norm(Var x, Var gamma, Var beta, int groups, double eps) {
    const Tensor& xv = value(x);
    int H = xv.dim(0), W = xv.dim(1), C = xv.dim(2);
    if (C % groups) throw std::invalid_argument("group_norm: C not divisible by groups");
    Tensor out(xv.shape());
    Tensor mean({groups}), rstd({groups});
    kern::group_norm(H, W, C, groups, eps, xv.data(), value(gamma).data(), value(beta).data(),
                     out.data(), mean.data(), rstd.data());
    int id = push(std::move(out), {x.id, gamma.id, beta.id}, any_requires(*this, {x, gamma, beta}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [x, gamma, beta, groups, H, W, C, mean, rstd](Tape& t, int self) {
            const Tensor& g = t.nodes_[self].grad;
            Tensor gx_scratch;
            double* gxp;
            if (t.nodes_[x.id].requires_grad) {
                gxp = t.grad_buf(x.id).data();
            } else {
                gx_scratch = Tensor(t.value(x).shape());
                gxp = gx_scratch.data();
            }
            kern::group_norm_bwd(
                H, W, C, groups, t.value(x).data(), t.value(gamma).data(), g.data(), mean.data(),
                rstd.data(), gxp,
                t.nodes_[gamma.id].requires_grad ? t.grad_buf(gamma.id).data() : nullptr,
                t.nodes_[beta.id].requires_grad ? t.grad_buf(beta.id).data() : nullptr);
        };
    return Var{id};
}

Var Tape::sum_squares(Var x) {
    const Tensor& xv = value(x);
    double v = kern::dot(xv.size(), xv.data(), xv.data());
    int id = push(Tensor::scalar(v), {x.id}, any_requires(*this, {x}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [x](Tape& t, int self) {
            double g = t.nodes_[self].grad[0];
            const Tensor& xval = t.value(x);
            kern::acc_scaled(xval.size(), 2.0 * g, xval.data(), t.grad_buf(x.id).data());
        };
    return Var{id};
}

Var Tape::sum_squares_diff(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("sum_squares_diff: shape mismatch");
    Tensor diff(av.shape());
    kern::axpby(diff.size(), 1.0, av.data(), -1.0, bv.data(), diff.data());
    double v = kern::dot(diff.size(), diff.data(), diff.data());
    int id = push(Tensor::scalar(v), {a.id, b.id}, any_requires(*this, {a, b}));
    if (nodes_[id].requires_grad)
        nodes_[id].backward = [a, b, diff](Tape& t, int self) {
            double g = t.nodes_[self].grad[0];
            if (t.nodes_[a.id].requires_grad)
                kern::acc_scaled(diff.size(), 2.0 * g, diff.data(), t.grad_buf(a.id).data());
            if (t.nodes_[b.id].requires_grad)
                kern::acc_scaled(diff.size(), -2.0 * g, diff.data(), t.grad_buf(b.id).data());
        };
    return Var{id};
}

Var Tape::checkpoint(const SegmentFn& fn, std::vector<Var> inputs) {
    if (!recompute_ || !grad_enabled_) return fn(*this, inputs);

    Tensor out_val;
    {
        Tape scratch(/*grad_enabled=*/false);
        std::vector<Var> inner;
        inner.reserve(inputs.size());
        for (Var v : inputs) inner.push_back(scratch.leaf(value(v), false));
        out_val = scratch.value(fn(scratch, inner));
    }
    std::vector<int> parents;
    bool req = false;
    for (Var v : inputs) {
        parents.push_back(v.id);
        req = req || requires_grad(v);
    }
    // Params touched inside fn live on scratch tapes only; their gradients
    // reach the ParamStore when the segment is re-run during backward, so a
    // segment without grad-requiring tensor inputs must still be recorded.
    int id = push(std::move(out_val), std::move(parents), true);
    nodes_[id].backward = [fn, inputs](Tape& t, int self) {
        Tape scratch(/*grad_enabled=*/true);
        std::vector<Var> inner;
        inner.reserve(inputs.size());
        for (Var v : inputs) scratch.leaf(t.value(v), t.requires_grad(v));
        for (std::size_t i = 0; i < inputs.size(); ++i) inner.push_back(Var{static_cast<int>(i)});
        Var out = fn(scratch, inner);
        scratch.backward(out, &t.nodes_[self].grad);
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (t.requires_grad(inputs[i])) t.add_grad(inputs[i].id, scratch.grad(inner[i]));
    };
    return Var{id};
}

void Tape::backward(Var root, const Tensor* seed) {
    if (!grad_enabled_) throw std::logic_error("backward on a no-grad tape");
    Node& rn = nodes_[root.id];
    Tensor& g = grad_buf(root.id);
    if (seed) {
        if (!seed->same_shape(rn.value)) throw std::invalid_argument("backward: bad seed shape");
        kern::acc_scaled(g.size(), 1.0, seed->data(), g.data());
    } else {
        if (rn.value.size() != 1) throw std::invalid_argument("backward: root must be scalar");
        g[0] += 1.0;
    }
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
        if (n.is_param && n.store->trainable(n.pname)) {
            Tensor& pg = n.store->grad(n.pname);
            kern::acc_scaled(n.grad.size(), 1.0, n.grad.data(), pg.data());
        }
    }
}

ValueGrad value_and_input_grad(const std::function<Var(Tape&, Var)>& fn, const Tensor& x,
                               bool recompute) {
    Tape tape(true, recompute);
    Var xin = tape.leaf(x, true);
    Var out = fn(tape, xin);
    tape.backward(out);
    return ValueGrad{tape.value(out)[0], tape.grad(xin)};
}

}  // namespace ldms::ad
