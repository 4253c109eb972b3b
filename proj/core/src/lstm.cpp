#include "bikeflow/lstm.hpp"

#include <algorithm>
#include <cmath>

#include "bikeflow/errors.hpp"

namespace bikeflow {

namespace {

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string("LstmWeights.") + name + " is " + m.shape_string() +
                         ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

void check_len(const Vector& v, std::size_t n, const char* name) {
    if (v.size() != n) {
        throw ShapeError(std::string("LstmWeights.") + name + " has length " +
                         std::to_string(v.size()) + ", expected " + std::to_string(n));
    }
}

TensorView view(const char* name, Matrix& m) { return {name, m.rows(), m.cols(), m.data()}; }
TensorView view(const char* name, Vector& v) { return {name, 1, v.size(), v}; }

// Pre-activation of one gate for unit j.
double gate_input(const Matrix& wx, const Matrix& wh, const Vector& b, std::size_t j,
                  std::span<const double> x, std::span<const double> h) {
    double s = b[j];
    auto rx = wx.row(j);
    for (std::size_t d = 0; d < x.size(); ++d) s += rx[d] * x[d];
    auto rh = wh.row(j);
    for (std::size_t q = 0; q < h.size(); ++q) s += rh[q] * h[q];
    return s;
}

}  // namespace

LstmWeights LstmWeights::zeros(std::size_t hidden, std::size_t inputs) {
    LstmWeights w;
    w.hidden = hidden;
    w.inputs = inputs;
    for (Matrix* m : {&w.W_fx, &w.W_ix, &w.W_ox, &w.W_Cx}) *m = Matrix(hidden, inputs);
    for (Matrix* m : {&w.W_fh, &w.W_ih, &w.W_oh, &w.W_Ch}) *m = Matrix(hidden, hidden);
    for (Vector* v : {&w.b_f, &w.b_i, &w.b_o, &w.b_C}) *v = Vector(hidden, 0.0);
    return w;
}

LstmWeights LstmWeights::initialized(std::size_t hidden, std::size_t inputs, RngStream& rng) {
    LstmWeights w = zeros(hidden, inputs);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (Matrix* m : {&w.W_fx, &w.W_ix, &w.W_ox, &w.W_Cx, &w.W_fh, &w.W_ih, &w.W_oh, &w.W_Ch})
        for (double& x : m->data()) x = rng.uniform(-bound, bound);
    return w;
}

void LstmWeights::validate() const {
    if (hidden == 0 || inputs == 0) throw ShapeError("LstmWeights: hidden and inputs must be >= 1");
    check_shape(W_fx, hidden, inputs, "W_fx");
    check_shape(W_ix, hidden, inputs, "W_ix");
    check_shape(W_ox, hidden, inputs, "W_ox");
    check_shape(W_Cx, hidden, inputs, "W_Cx");
    check_shape(W_fh, hidden, hidden, "W_fh");
    check_shape(W_ih, hidden, hidden, "W_ih");
    check_shape(W_oh, hidden, hidden, "W_oh");
    check_shape(W_Ch, hidden, hidden, "W_Ch");
    check_len(b_f, hidden, "b_f");
    check_len(b_i, hidden, "b_i");
    check_len(b_o, hidden, "b_o");
    check_len(b_C, hidden, "b_C");
}

std::vector<TensorView> LstmWeights::tensors() {
    return {view("W_fx", W_fx), view("W_ix", W_ix), view("W_ox", W_ox), view("W_Cx", W_Cx),
            view("W_fh", W_fh), view("W_ih", W_ih), view("W_oh", W_oh), view("W_Ch", W_Ch),
            view("b_f", b_f),   view("b_i", b_i),   view("b_o", b_o),   view("b_C", b_C)};
}

std::size_t LstmWeights::parameter_count() const {
    return 4 * (hidden * inputs + hidden * hidden + hidden);
}

std::size_t param_count_lstm(std::size_t hidden, std::size_t inputs) {
    return 4 * hidden * (inputs + hidden + 1);
}

LstmState lstm_step(std::span<const double> x, const LstmState& prev, const LstmWeights& w) {
    if (x.size() != w.inputs) {
        throw ShapeError("lstm_step: input of length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(w.inputs));
    }
    if (prev.h.size() != w.hidden || prev.c.size() != w.hidden) {
        throw ShapeError("lstm_step: state of size " + std::to_string(prev.h.size()) + "/" +
                         std::to_string(prev.c.size()) + ", expected " + std::to_string(w.hidden));
    }
    LstmState next = LstmState::zeros(w.hidden);
    for (std::size_t j = 0; j < w.hidden; ++j) {
        const double f = sigmoid(gate_input(w.W_fx, w.W_fh, w.b_f, j, x, prev.h));
        const double i = sigmoid(gate_input(w.W_ix, w.W_ih, w.b_i, j, x, prev.h));
        const double g = std::tanh(gate_input(w.W_Cx, w.W_Ch, w.b_C, j, x, prev.h));
        const double o = sigmoid(gate_input(w.W_ox, w.W_oh, w.b_o, j, x, prev.h));
        next.c[j] = f * prev.c[j] + i * g;
        next.h[j] = std::tanh(next.c[j]) * o;
    }
    return next;
}

Vector draw_dropout_mask(std::size_t n, double rate, RngStream& rng) {
    Vector mask(n);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    return mask;
}

LstmForwardResult lstm_forward(const Matrix& seq, const LstmWeights& w, double dropout, Mode mode,
                               RngStream& rng) {
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw DomainError("lstm_forward: dropout rate must lie in [0, 1), got " +
                          std::to_string(dropout));
    }
    Vector mask;
    if (mode == Mode::train && dropout > 0.0) mask = draw_dropout_mask(w.hidden, dropout, rng);
    return lstm_forward_masked(seq, w, mask);
}

LstmForwardResult lstm_forward_masked(const Matrix& seq, const LstmWeights& w,
                                      std::span<const double> mask) {
    if (seq.rows() == 0) throw DomainError("lstm_forward: empty sequence");
    if (seq.cols() != w.inputs) {
        throw ShapeError("lstm_forward: sequence " + seq.shape_string() + " has " +
                         std::to_string(seq.cols()) + " features, weights expect " +
                         std::to_string(w.inputs));
    }
    if (!mask.empty() && mask.size() != w.hidden) {
        throw ShapeError("lstm_forward: mask of length " + std::to_string(mask.size()) +
                         ", expected " + std::to_string(w.hidden));
    }
    const std::size_t k = w.hidden;
    LstmForwardResult out;
    out.tape.mask.assign(mask.begin(), mask.end());
    LstmState state = LstmState::zeros(k);
    for (std::size_t t = 0; t < seq.rows(); ++t) {
        LstmTape::Step step;
        auto x = seq.row(t);
        step.x.assign(x.begin(), x.end());
        step.h_in = state.h;
        if (!mask.empty())
            for (std::size_t j = 0; j < k; ++j) step.h_in[j] *= mask[j];
        step.c_prev = state.c;
        step.f.resize(k);
        step.i.resize(k);
        step.o.resize(k);
        step.g.resize(k);
        step.c.resize(k);
        step.tanh_c.resize(k);
        for (std::size_t j = 0; j < k; ++j) {
            step.f[j] = sigmoid(gate_input(w.W_fx, w.W_fh, w.b_f, j, x, step.h_in));
            step.i[j] = sigmoid(gate_input(w.W_ix, w.W_ih, w.b_i, j, x, step.h_in));
            step.g[j] = std::tanh(gate_input(w.W_Cx, w.W_Ch, w.b_C, j, x, step.h_in));
            step.o[j] = sigmoid(gate_input(w.W_ox, w.W_oh, w.b_o, j, x, step.h_in));
            step.c[j] = step.f[j] * step.c_prev[j] + step.i[j] * step.g[j];
            step.tanh_c[j] = std::tanh(step.c[j]);
            state.c[j] = step.c[j];
            state.h[j] = step.tanh_c[j] * step.o[j];
        }
        out.tape.steps.push_back(std::move(step));
    }
    out.final = std::move(state);
    return out;
}

LstmBackwardResult lstm_backward(const LstmTape& tape, const LstmWeights& w,
                                 std::span<const double> dh_final) {
    const std::size_t k = w.hidden;
    const std::size_t d_in = w.inputs;
    if (dh_final.size() != k) {
        throw ShapeError("lstm_backward: upstream gradient of length " +
                         std::to_string(dh_final.size()) + ", expected " + std::to_string(k));
    }
    if (tape.steps.empty()) throw ShapeError("lstm_backward: empty tape");
    if (tape.steps.front().x.size() != d_in || tape.steps.front().f.size() != k) {
        throw ShapeError("lstm_backward: tape does not match weights");
    }
    const std::size_t steps = tape.steps.size();
    LstmBackwardResult out{LstmGradients::zeros(k, d_in), Matrix(steps, d_in)};
    auto& gr = out.grads;

    Vector dh(dh_final.begin(), dh_final.end());
    Vector dc(k, 0.0);
    Vector dz_f(k), dz_i(k), dz_o(k), dz_g(k);
    for (std::size_t t = steps; t-- > 0;) {
        const auto& s = tape.steps[t];
        for (std::size_t j = 0; j < k; ++j) {
            const double tc = s.tanh_c[j];
            dc[j] += dh[j] * s.o[j] * (1.0 - tc * tc);
            const double d_o = dh[j] * tc;
            const double d_f = dc[j] * s.c_prev[j];
            const double d_i = dc[j] * s.g[j];
            const double d_g = dc[j] * s.i[j];
            dz_f[j] = d_f * s.f[j] * (1.0 - s.f[j]);
            dz_i[j] = d_i * s.i[j] * (1.0 - s.i[j]);
            dz_o[j] = d_o * s.o[j] * (1.0 - s.o[j]);
            dz_g[j] = d_g * (1.0 - s.g[j] * s.g[j]);
            dc[j] *= s.f[j];
        }
        const std::pair<const Vector*, std::pair<Matrix*, Matrix*>> gates[] = {
            {&dz_f, {&gr.W_fx, &gr.W_fh}},
            {&dz_i, {&gr.W_ix, &gr.W_ih}},
            {&dz_o, {&gr.W_ox, &gr.W_oh}},
            {&dz_g, {&gr.W_Cx, &gr.W_Ch}},
        };
        Vector* biases[] = {&gr.b_f, &gr.b_i, &gr.b_o, &gr.b_C};
        const Matrix* wx[] = {&w.W_fx, &w.W_ix, &w.W_ox, &w.W_Cx};
        const Matrix* wh[] = {&w.W_fh, &w.W_ih, &w.W_oh, &w.W_Ch};
        Vector dh_in(k, 0.0);
        auto dx = out.input_grad.row(t);
        for (int gi = 0; gi < 4; ++gi) {
            const Vector& dz = *gates[gi].first;
            Matrix& gwx = *gates[gi].second.first;
            Matrix& gwh = *gates[gi].second.second;
            for (std::size_t j = 0; j < k; ++j) {
                const double z = dz[j];
                (*biases[gi])[j] += z;
                auto rx = gwx.row(j);
                for (std::size_t d = 0; d < d_in; ++d) rx[d] += z * s.x[d];
                auto rh = gwh.row(j);
                for (std::size_t q = 0; q < k; ++q) rh[q] += z * s.h_in[q];
                auto wxr = wx[gi]->row(j);
                for (std::size_t d = 0; d < d_in; ++d) dx[d] += z * wxr[d];
                auto whr = wh[gi]->row(j);
                for (std::size_t q = 0; q < k; ++q) dh_in[q] += z * whr[q];
            }
        }
        for (std::size_t q = 0; q < k; ++q)
            dh[q] = tape.mask.empty() ? dh_in[q] : dh_in[q] * tape.mask[q];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batched kernel

void LstmBatch::forward(const LstmWeights& w, std::span<const Matrix* const> seqs,
                        std::span<const Vector> masks) {
    if (seqs.empty()) throw DomainError("LstmBatch::forward: empty batch");
    const std::size_t k = w.hidden;
    const std::size_t d_in = w.inputs;
    const std::size_t nb = seqs.size();
    const std::size_t steps = seqs.front()->rows();
    if (steps == 0) throw DomainError("LstmBatch::forward: empty sequence");
    for (const Matrix* s : seqs) {
        if (s->rows() != steps || s->cols() != d_in) {
            throw ShapeError("LstmBatch::forward: sequence " + s->shape_string() + ", expected " +
                             std::to_string(steps) + "x" + std::to_string(d_in));
        }
    }
    if (!masks.empty() && masks.size() != nb) {
        throw ShapeError("LstmBatch::forward: mask count does not match batch size");
    }
    batch_ = nb;
    steps_ = steps;
    hidden_ = k;

    // Pack gates in f, i, o, C order.
    wx_ = Matrix(4 * k, d_in);
    wh_ = Matrix(4 * k, k);
    bias_.assign(4 * k, 0.0);
    const Matrix* wxs[] = {&w.W_fx, &w.W_ix, &w.W_ox, &w.W_Cx};
    const Matrix* whs[] = {&w.W_fh, &w.W_ih, &w.W_oh, &w.W_Ch};
    const Vector* bs[] = {&w.b_f, &w.b_i, &w.b_o, &w.b_C};
    for (std::size_t g = 0; g < 4; ++g) {
        for (std::size_t j = 0; j < k; ++j) {
            auto sx = wxs[g]->row(j);
            std::copy(sx.begin(), sx.end(), wx_.row(g * k + j).begin());
            auto sh = whs[g]->row(j);
            std::copy(sh.begin(), sh.end(), wh_.row(g * k + j).begin());
            bias_[g * k + j] = (*bs[g])[j];
        }
    }

    has_mask_ = false;
    mask_ = Matrix(k, nb, 1.0);
    for (std::size_t b = 0; b < masks.size(); ++b) {
        if (masks[b].empty()) continue;
        if (masks[b].size() != k) throw ShapeError("LstmBatch::forward: mask length mismatch");
        has_mask_ = true;
        for (std::size_t j = 0; j < k; ++j) mask_(j, b) = masks[b][j];
    }

    x_.assign(steps, Matrix(d_in, nb));
    h_in_.assign(steps, Matrix(k, nb));
    gates_.assign(steps, Matrix(4 * k, nb));
    c_.assign(steps + 1, Matrix(k, nb));
    tanh_c_.assign(steps, Matrix(k, nb));
    h_.assign(steps, Matrix(k, nb));

    for (std::size_t t = 0; t < steps; ++t) {
        Matrix& x = x_[t];
        for (std::size_t b = 0; b < nb; ++b) {
            auto row = seqs[b]->row(t);
            for (std::size_t d = 0; d < d_in; ++d) x(d, b) = row[d];
        }
        Matrix& hin = h_in_[t];
        if (t > 0) {
            const Matrix& hp = h_[t - 1];
            for (std::size_t j = 0; j < k; ++j) {
                const double* src = hp.row(j).data();
                const double* m = mask_.row(j).data();
                double* dst = hin.row(j).data();
                if (has_mask_)
                    for (std::size_t b = 0; b < nb; ++b) dst[b] = src[b] * m[b];
                else
                    for (std::size_t b = 0; b < nb; ++b) dst[b] = src[b];
            }
        }
        Matrix& z = gates_[t];
        for (std::size_t r = 0; r < 4 * k; ++r) {
            auto zr = z.row(r);
            std::fill(zr.begin(), zr.end(), bias_[r]);
        }
        gemm_acc(wx_, false, x, z);
        if (t > 0) gemm_acc(wh_, false, hin, z);
        for (std::size_t r = 0; r < 3 * k; ++r)
            for (double& v : z.row(r)) v = sigmoid(v);
        for (std::size_t r = 3 * k; r < 4 * k; ++r)
            for (double& v : z.row(r)) v = std::tanh(v);
        const Matrix& cp = c_[t];
        Matrix& cn = c_[t + 1];
        Matrix& tc = tanh_c_[t];
        Matrix& h = h_[t];
        for (std::size_t j = 0; j < k; ++j) {
            const double* f = z.row(j).data();
            const double* i = z.row(k + j).data();
            const double* o = z.row(2 * k + j).data();
            const double* g = z.row(3 * k + j).data();
            const double* cprev = cp.row(j).data();
            double* cnew = cn.row(j).data();
            double* tcj = tc.row(j).data();
            double* hj = h.row(j).data();
            for (std::size_t b = 0; b < nb; ++b) {
                cnew[b] = f[b] * cprev[b] + i[b] * g[b];
                tcj[b] = std::tanh(cnew[b]);
                hj[b] = tcj[b] * o[b];
            }
        }
    }
}

void LstmBatch::backward(const LstmWeights& w, const Matrix& dh_final, LstmGradients& grads) {
    const std::size_t k = hidden_;
    const std::size_t nb = batch_;
    if (dh_final.rows() != k || dh_final.cols() != nb) {
        throw ShapeError("LstmBatch::backward: upstream " + dh_final.shape_string() +
                         ", expected " + std::to_string(k) + "x" + std::to_string(nb));
    }
    if (grads.hidden != w.hidden || grads.inputs != w.inputs) {
        throw ShapeError("LstmBatch::backward: gradient buffer does not match weights");
    }
    const std::size_t d_in = w.inputs;
    Matrix dh = dh_final;
    Matrix dc(k, nb);
    Matrix dz(4 * k, nb);
    Matrix dh_in(k, nb);
    Matrix gwx(4 * k, d_in);
    Matrix gwh(4 * k, k);
    Vector gb(4 * k, 0.0);

    for (std::size_t t = steps_; t-- > 0;) {
        const Matrix& z = gates_[t];
        const Matrix& cp = c_[t];
        const Matrix& tc = tanh_c_[t];
        for (std::size_t j = 0; j < k; ++j) {
            const double* f = z.row(j).data();
            const double* i = z.row(k + j).data();
            const double* o = z.row(2 * k + j).data();
            const double* g = z.row(3 * k + j).data();
            const double* cprev = cp.row(j).data();
            const double* tcj = tc.row(j).data();
            const double* dhj = dh.row(j).data();
            double* dcj = dc.row(j).data();
            double* dzf = dz.row(j).data();
            double* dzi = dz.row(k + j).data();
            double* dzo = dz.row(2 * k + j).data();
            double* dzg = dz.row(3 * k + j).data();
            for (std::size_t b = 0; b < nb; ++b) {
                const double tcb = tcj[b];
                dcj[b] += dhj[b] * o[b] * (1.0 - tcb * tcb);
                dzo[b] = dhj[b] * tcb * o[b] * (1.0 - o[b]);
                dzf[b] = dcj[b] * cprev[b] * f[b] * (1.0 - f[b]);
                dzi[b] = dcj[b] * g[b] * i[b] * (1.0 - i[b]);
                dzg[b] = dcj[b] * i[b] * (1.0 - g[b] * g[b]);
                dcj[b] *= f[b];
            }
        }
        for (std::size_t r = 0; r < 4 * k; ++r) {
            const double* dzr = dz.row(r).data();
            double s = 0.0;
            for (std::size_t b = 0; b < nb; ++b) s += dzr[b];
            gb[r] += s;
        }
        gemm_acc(dz, false, x_[t].transpose(), gwx);
        if (t == 0) break;
        gemm_acc(dz, false, h_in_[t].transpose(), gwh);
        dh_in.fill(0.0);
        gemm_acc(wh_, true, dz, dh_in);
        for (std::size_t q = 0; q < k; ++q) {
            const double* src = dh_in.row(q).data();
            const double* m = mask_.row(q).data();
            double* dst = dh.row(q).data();
            if (has_mask_)
                for (std::size_t b = 0; b < nb; ++b) dst[b] = src[b] * m[b];
            else
                for (std::size_t b = 0; b < nb; ++b) dst[b] = src[b];
        }
    }

    Matrix* gxs[] = {&grads.W_fx, &grads.W_ix, &grads.W_ox, &grads.W_Cx};
    Matrix* ghs[] = {&grads.W_fh, &grads.W_ih, &grads.W_oh, &grads.W_Ch};
    Vector* gbs[] = {&grads.b_f, &grads.b_i, &grads.b_o, &grads.b_C};
    for (std::size_t g = 0; g < 4; ++g) {
        for (std::size_t j = 0; j < k; ++j) {
            auto src_x = gwx.row(g * k + j);
            auto dst_x = gxs[g]->row(j);
            for (std::size_t d = 0; d < d_in; ++d) dst_x[d] += src_x[d];
            auto src_h = gwh.row(g * k + j);
            auto dst_h = ghs[g]->row(j);
            for (std::size_t q = 0; q < k; ++q) dst_h[q] += src_h[q];
            (*gbs[g])[j] += gb[g * k + j];
        }
    }
}

}  // namespace bikeflow
