#include "frap/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace frap {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& what)
{
    throw std::invalid_argument(std::string(op) + ": " + what);
}

void debug_check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* where)
{
#ifndef NDEBUG
    if (!t.all_finite()) throw std::domain_error(std::string("non-finite value in ") + where);
#endif
}

Tape& tape_of(Var a) { return *a.tape; }

void same_tape(Var a, Var b, const char* op)
{
    if (a.tape != b.tape || a.tape == nullptr) shape_error(op, "operands live on different tapes");
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis)
{
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value)
{
    debug_check_finite(value, "constant");
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(const std::string& name, const Tensor& value)
{
    debug_check_finite(value, name.c_str());
    nodes_.push_back(Node{value, {}, {}, name, grad_enabled_});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn)
{
    return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn)
{
    debug_check_finite(value, "operator output");
    bool needs = false;
    if (grad_enabled_)
        for (const Var& v : inputs) needs = needs || nodes_[v.id].needs_grad;
    Node n{std::move(value), {}, {}, {}, needs};
    if (needs) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_mut(std::size_t id)
{
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0);
    return n.grad;
}

ParamSet Tape::backward(Var loss)
{
    if (loss.tape != this) throw std::invalid_argument("backward: loss was not recorded on this tape");
    if (nodes_[loss.id].value.size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(nodes_[loss.id].value.shape()));
    for (Node& n : nodes_) n.grad = Tensor();
    if (nodes_[loss.id].needs_grad) grad_mut(loss.id).fill(1);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.backward || n.grad.size() == 0) continue;
        n.backward(*this, id);
    }
    ParamSet out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (n.param_name.empty()) continue;
        out[n.param_name] = n.grad.size() ? n.grad : Tensor(n.value.shape(), 0);
    }
    return out;
}

ParamVars place_params(Tape& tape, const ParamSet& params)
{
    ParamVars vars;
    for (const auto& [name, t] : params) vars.emplace(name, tape.param(name, t));
    return vars;
}

Var affine(Var x, Var W, Var b)
{
    same_tape(x, W, "affine");
    same_tape(x, b, "affine");
    const Tensor& xv = x.value();
    const Tensor& Wv = W.value();
    const Tensor& bv = b.value();
    if (Wv.rank() != 2) shape_error("affine", "weight must be rank 2, got " + shape_string(Wv.shape()));
    if (xv.rank() < 1) shape_error("affine", "input must have rank >= 1");
    const std::size_t in = Wv.dim(0), out = Wv.dim(1);
    if (xv.shape().back() != in)
        shape_error("affine", "input " + shape_string(xv.shape()) + " incompatible with weight " + shape_string(Wv.shape()));
    if (bv.rank() != 1 || bv.dim(0) != out) shape_error("affine", "bias shape " + shape_string(bv.shape()));

    const std::size_t rows = xv.size() / in;
    Shape ys = xv.shape();
    ys.back() = out;
    Tensor y(ys);
    const Real* xp = xv.ptr();
    const Real* wp = Wv.ptr();
    const Real* bp = bv.ptr();
    Real* yp = y.ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        Real* yr = yp + r * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] = bp[o];
        const Real* xr = xp + r * in;
        for (std::size_t i = 0; i < in; ++i) {
            const Real xi = xr[i];
            if (xi == 0) continue;
            const Real* wr = wp + i * out;
            for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
        }
    }

    const std::size_t xid = x.id, wid = W.id, bid = b.id;
    return tape_of(x).record(std::move(y), {x, W, b}, [xid, wid, bid, rows, in, out](Tape& t, std::size_t self) {
        const Real* g = t.grad(self).ptr();
        if (t.needs_grad(xid)) {
            Real* gx = t.grad_mut(xid).ptr();
            const Real* wp = t.value(wid).ptr();
            for (std::size_t r = 0; r < rows; ++r) {
                const Real* gr = g + r * out;
                Real* gxr = gx + r * in;
                for (std::size_t i = 0; i < in; ++i) {
                    const Real* wr = wp + i * out;
                    Real acc = 0;
                    for (std::size_t o = 0; o < out; ++o) acc += gr[o] * wr[o];
                    gxr[i] += acc;
                }
            }
        }
        if (t.needs_grad(wid)) {
            Real* gw = t.grad_mut(wid).ptr();
            const Real* xp = t.value(xid).ptr();
            for (std::size_t r = 0; r < rows; ++r) {
                const Real* gr = g + r * out;
                const Real* xr = xp + r * in;
                for (std::size_t i = 0; i < in; ++i) {
                    const Real xi = xr[i];
                    if (xi == 0) continue;
                    Real* gwr = gw + i * out;
                    for (std::size_t o = 0; o < out; ++o) gwr[o] += xi * gr[o];
                }
            }
        }
        if (t.needs_grad(bid)) {
            Real* gb = t.grad_mut(bid).ptr();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
        }
    });
}

Var conv1x1(Var x, Var W, Var b)
{
    if (x.value().rank() < 3) shape_error("conv1x1", "expects a [..., P, O, C] volume, got " + shape_string(x.shape()));
    return affine(x, W, b);
}

Var relu(Var x)
{
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > 0 ? xv[i] : 0;
    const std::size_t xid = x.id;
    return tape_of(x).record(std::move(y), {x}, [xid](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(xid);
        Tensor& gx = t.grad_mut(xid);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0) gx[i] += g[i];
    });
}

Var add(Var a, Var b)
{
    same_tape(a, b, "add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape() != bv.shape()) shape_error("add", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    Tensor y(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
    const std::size_t aid = a.id, bid = b.id;
    return tape_of(a).record(std::move(y), {a, b}, [aid, bid](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (std::size_t id : {aid, bid}) {
            if (!t.needs_grad(id)) continue;
            Tensor& gi = t.grad_mut(id);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

Var mul_elem(Var a, Var b)
{
    same_tape(a, b, "mul_elem");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.shape() != bv.shape()) shape_error("mul_elem", shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    Tensor y(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
    const std::size_t aid = a.id, bid = b.id;
    return tape_of(a).record(std::move(y), {a, b}, [aid, bid](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.needs_grad(aid)) {
            Tensor& ga = t.grad_mut(aid);
            const Tensor& bv = t.value(bid);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(bid)) {
            Tensor& gb = t.grad_mut(bid);
            const Tensor& av = t.value(aid);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var concat(std::initializer_list<Var> xs, std::size_t axis)
{
    return concat(std::span<const Var>(xs.begin(), xs.size()), axis);
}

Var concat(std::span<const Var> xs, std::size_t axis)
{
    if (xs.empty()) shape_error("concat", "no inputs");
    const Shape& s0 = xs[0].value().shape();
    if (axis >= s0.size()) shape_error("concat", "axis out of range");
    Shape ys = s0;
    ys[axis] = 0;
    std::vector<std::size_t> extents;
    for (const Var& v : xs) {
        same_tape(xs[0], v, "concat");
        const Shape& s = v.value().shape();
        if (s.size() != s0.size()) shape_error("concat", "rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != s0[d]) shape_error("concat", shape_string(s) + " vs " + shape_string(s0));
        extents.push_back(s[axis]);
        ys[axis] += s[axis];
    }
    const AxisSplit split = split_axis(ys, axis);
    Tensor y(ys);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Tensor& xv = xs[k].value();
        const std::size_t chunk = extents[k] * split.inner;
        for (std::size_t o = 0; o < split.outer; ++o) {
            const Real* src = xv.ptr() + o * chunk;
            Real* dst = y.ptr() + o * split.extent * split.inner + offset * split.inner;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] = src[i];
        }
        offset += extents[k];
    }
    std::vector<std::size_t> ids;
    for (const Var& v : xs) ids.push_back(v.id);
    return tape_of(xs[0]).record(std::move(y), xs, [ids, extents, split](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t chunk = extents[k] * split.inner;
            if (t.needs_grad(ids[k])) {
                Tensor& gx = t.grad_mut(ids[k]);
                for (std::size_t o = 0; o < split.outer; ++o) {
                    const Real* src = g.ptr() + o * split.extent * split.inner + offset * split.inner;
                    Real* dst = gx.ptr() + o * chunk;
                    for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                }
            }
            offset += extents[k];
        }
    });
}

Var embed(Var table, std::vector<int> indices, Shape lead_shape)
{
    const Tensor& tv = table.value();
    if (tv.rank() != 2) shape_error("embed", "table must be rank 2");
    if (shape_size(lead_shape) != indices.size()) shape_error("embed", "index count does not match lead shape");
    const std::size_t rows = tv.dim(0), width = tv.dim(1);
    Shape ys = lead_shape;
    ys.push_back(width);
    Tensor y(ys);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const int r = indices[k];
        if (r < 0 || static_cast<std::size_t>(r) >= rows) shape_error("embed", "index out of range");
        for (std::size_t c = 0; c < width; ++c) y[k * width + c] = tv[static_cast<std::size_t>(r) * width + c];
    }
    const std::size_t tid = table.id;
    return tape_of(table).record(std::move(y), {table},
                                 [tid, idx = std::move(indices), width](Tape& t, std::size_t self) {
                                     const Tensor& g = t.grad(self);
                                     Tensor& gt = t.grad_mut(tid);
                                     for (std::size_t k = 0; k < idx.size(); ++k)
                                         for (std::size_t c = 0; c < width; ++c)
                                             gt[static_cast<std::size_t>(idx[k]) * width + c] += g[k * width + c];
                                 });
}

Var gather(Var x, std::size_t axis, std::vector<int> indices)
{
    const Tensor& xv = x.value();
    if (axis >= xv.rank()) shape_error("gather", "axis out of range");
    const AxisSplit src = split_axis(xv.shape(), axis);
    for (int i : indices)
        if (i < 0 || static_cast<std::size_t>(i) >= src.extent) shape_error("gather", "index out of range");
    Shape ys = xv.shape();
    ys[axis] = indices.size();
    Tensor y(ys);
    const std::size_t n = indices.size();
    for (std::size_t o = 0; o < src.outer; ++o)
        for (std::size_t k = 0; k < n; ++k) {
            const Real* s = xv.ptr() + (o * src.extent + static_cast<std::size_t>(indices[k])) * src.inner;
            Real* d = y.ptr() + (o * n + k) * src.inner;
            for (std::size_t i = 0; i < src.inner; ++i) d[i] = s[i];
        }
    const std::size_t xid = x.id;
    return tape_of(x).record(std::move(y), {x}, [xid, src, idx = std::move(indices)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_mut(xid);
        const std::size_t n = idx.size();
        for (std::size_t o = 0; o < src.outer; ++o)
            for (std::size_t k = 0; k < n; ++k) {
                Real* d = gx.ptr() + (o * src.extent + static_cast<std::size_t>(idx[k])) * src.inner;
                const Real* s = g.ptr() + (o * n + k) * src.inner;
                for (std::size_t i = 0; i < src.inner; ++i) d[i] += s[i];
            }
    });
}

Var reshape(Var x, Shape shape)
{
    const Tensor& xv = x.value();
    if (shape_size(shape) != xv.size())
        shape_error("reshape", shape_string(xv.shape()) + " -> " + shape_string(shape));
    Tensor y(std::move(shape), std::vector<Real>(xv.data().begin(), xv.data().end()));
    const std::size_t xid = x.id;
    return tape_of(x).record(std::move(y), {x}, [xid](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_mut(xid);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Var sum_axis(Var x, std::size_t axis)
{
    const Tensor& xv = x.value();
    if (axis >= xv.rank()) shape_error("sum_axis", "axis out of range");
    const AxisSplit s = split_axis(xv.shape(), axis);
    Shape ys = xv.shape();
    ys.erase(ys.begin() + static_cast<std::ptrdiff_t>(axis));
    Tensor y(ys, 0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.extent; ++k) {
            const Real* src = xv.ptr() + (o * s.extent + k) * s.inner;
            Real* dst = y.ptr() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    const std::size_t xid = x.id;
    return tape_of(x).record(std::move(y), {x}, [xid, s](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& gx = t.grad_mut(xid);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < s.extent; ++k) {
                Real* dst = gx.ptr() + (o * s.extent + k) * s.inner;
                const Real* src = g.ptr() + o * s.inner;
                for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
            }
    });
}

Var sum_all(Var x)
{
    const Tensor& xv = x.value();
    Real acc = 0;
    for (Real v : xv.data()) acc += v;
    const std::size_t xid = x.id;
    return tape_of(x).record(Tensor::scalar(acc), {x}, [xid](Tape& t, std::size_t self) {
        const Real g = t.grad(self)[0];
        Tensor& gx = t.grad_mut(xid);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

Var huber_loss(Var pred, const Tensor& target, const Tensor& mask, Real delta, const Tensor& weights)
{
    const Tensor& pv = pred.value();
    if (pv.rank() != 2) shape_error("huber_loss", "prediction must be [B, A]");
    if (target.shape() != pv.shape() || mask.shape() != pv.shape())
        shape_error("huber_loss", "target/mask must match prediction shape " + shape_string(pv.shape()));
    if (delta <= 0) shape_error("huber_loss", "delta must be positive");
    const std::size_t B = pv.dim(0), A = pv.dim(1);
    if (weights.size() != 0 && (weights.rank() != 1 || weights.dim(0) != B))
        shape_error("huber_loss", "weights must be [B]");

    Tensor dpred(pv.shape(), 0);
    Real loss = 0;
    for (std::size_t b = 0; b < B; ++b) {
        const Real w = weights.size() ? weights[b] : Real(1);
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t k = b * A + a;
            if (mask[k] == 0) continue;
            const Real e = pv[k] - target[k];
            const Real ae = std::abs(e);
            const Real h = ae <= delta ? 0.5 * e * e : delta * (ae - 0.5 * delta);
            const Real dh = ae <= delta ? e : (e > 0 ? delta : -delta);
            loss += w * mask[k] * h;
            dpred[k] = w * mask[k] * dh / static_cast<Real>(B);
        }
    }
    loss /= static_cast<Real>(B);
    const std::size_t pid = pred.id;
    return tape_of(pred).record(Tensor::scalar(loss), {pred}, [pid, d = std::move(dpred)](Tape& t, std::size_t self) {
        const Real g = t.grad(self)[0];
        Tensor& gp = t.grad_mut(pid);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * d[i];
    });
}

}  // namespace frap
