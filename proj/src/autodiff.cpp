#include "metawarm/autodiff.hpp"

#include <cmath>

#include "metawarm/errors.hpp"

namespace metawarm {

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.grad = Tensor(value.rows, value.cols, 0.0);
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Tape::leaf(Tensor value) { return push(std::move(value), true, {}); }

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols != B.rows) throw ConfigError("matmul: inner dimensions differ");
    Tensor C(A.rows, B.cols, 0.0);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double aik = A.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
        }
    Var out = push(std::move(C), needs(a) || needs(b), {});
    nodes_[out.id].back = [a, b, out](Tape& t) {
        const Tensor& dC = t.grad_ref(out);
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        if (t.needs(a)) {
            Tensor& dA = t.grad_ref(a);
            for (std::size_t i = 0; i < A.rows; ++i)
                for (std::size_t j = 0; j < B.cols; ++j) {
                    const double g = dC.at(i, j);
                    if (g == 0.0) continue;
                    for (std::size_t k = 0; k < A.cols; ++k) dA.at(i, k) += g * B.at(k, j);
                }
        }
        if (t.needs(b)) {
            Tensor& dB = t.grad_ref(b);
            for (std::size_t i = 0; i < A.rows; ++i)
                for (std::size_t k = 0; k < A.cols; ++k) {
                    const double av = A.at(i, k);
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < B.cols; ++j) dB.at(k, j) += av * dC.at(i, j);
                }
        }
    };
    return out;
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const bool bias_row = (B.rows == 1 && A.rows > 1 && B.cols == A.cols);
    if (!bias_row && !A.same_shape(B)) throw ConfigError("add: shape mismatch");
    Tensor C = A;
    if (bias_row) {
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < A.cols; ++j) C.at(i, j) += B.at(0, j);
    } else {
        for (std::size_t k = 0; k < C.size(); ++k) C.data[k] += B.data[k];
    }
    Var out = push(std::move(C), needs(a) || needs(b), {});
    nodes_[out.id].back = [a, b, out, bias_row](Tape& t) {
        const Tensor& dC = t.grad_ref(out);
        if (t.needs(a)) {
            Tensor& dA = t.grad_ref(a);
            for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k];
        }
        if (t.needs(b)) {
            Tensor& dB = t.grad_ref(b);
            if (bias_row) {
                for (std::size_t i = 0; i < dC.rows; ++i)
                    for (std::size_t j = 0; j < dC.cols; ++j) dB.at(0, j) += dC.at(i, j);
            } else {
                for (std::size_t k = 0; k < dC.size(); ++k) dB.data[k] += dC.data[k];
            }
        }
    };
    return out;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ConfigError("sub: shape mismatch");
    Tensor C = A;
    for (std::size_t k = 0; k < C.size(); ++k) C.data[k] -= B.data[k];
    Var out = push(std::move(C), needs(a) || needs(b), {});
    nodes_[out.id].back = [a, b, out](Tape& t) {
        const Tensor& dC = t.grad_ref(out);
        if (t.needs(a)) {
            Tensor& dA = t.grad_ref(a);
            for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k];
        }
        if (t.needs(b)) {
            Tensor& dB = t.grad_ref(b);
            for (std::size_t k = 0; k < dC.size(); ++k) dB.data[k] -= dC.data[k];
        }
    };
    return out;
}

Var Tape::mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ConfigError("mul: shape mismatch");
    Tensor C = A;
    for (std::size_t k = 0; k < C.size(); ++k) C.data[k] *= B.data[k];
    Var out = push(std::move(C), needs(a) || needs(b), {});
    nodes_[out.id].back = [a, b, out](Tape& t) {
        const Tensor& dC = t.grad_ref(out);
        const Tensor& A = t.value(a);
        const Tensor& B = t.value(b);
        if (t.needs(a)) {
            Tensor& dA = t.grad_ref(a);
            for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k] * B.data[k];
        }
        if (t.needs(b)) {
            Tensor& dB = t.grad_ref(b);
            for (std::size_t k = 0; k < dC.size(); ++k) dB.data[k] += dC.data[k] * A.data[k];
        }
    };
    return out;
}

Var Tape::scale(Var a, double c) {
    Tensor C = value(a);
    for (double& v : C.data) v *= c;
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out, c](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += c * dC.data[k];
    };
    return out;
}

Var Tape::add_const(Var a, double c) {
    Tensor C = value(a);
    for (double& v : C.data) v += c;
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k];
    };
    return out;
}

Var Tape::relu(Var a) {
    Tensor C = value(a);
    for (double& v : C.data) v = v > 0.0 ? v : 0.0;
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        const Tensor& A = t.value(a);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k)
            if (A.data[k] > 0.0) dA.data[k] += dC.data[k];
    };
    return out;
}

Var Tape::exp(Var a) {
    Tensor C = value(a);
    for (double& v : C.data) v = std::exp(v);
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        const Tensor& V = t.value(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k] * V.data[k];
    };
    return out;
}

Var Tape::log(Var a) {
    Tensor C = value(a);
    for (double& v : C.data) v = std::log(v);
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        const Tensor& A = t.value(a);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k] / A.data[k];
    };
    return out;
}

Var Tape::clamp(Var a, double lo, double hi) {
    Tensor C = value(a);
    for (double& v : C.data) v = v < lo ? lo : (v > hi ? hi : v);
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out, lo, hi](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        const Tensor& A = t.value(a);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k)
            if (A.data[k] > lo && A.data[k] < hi) dA.data[k] += dC.data[k];
    };
    return out;
}

Var Tape::sum_all(Var a) {
    double s = 0.0;
    for (double v : value(a).data) s += v;
    Var out = push(Tensor::scalar(s), needs(a), {});
    nodes_[out.id].back = [a, out](Tape& t) {
        if (!t.needs(a)) return;
        const double g = t.grad_ref(out).item();
        Tensor& dA = t.grad_ref(a);
        for (double& v : dA.data) v += g;
    };
    return out;
}

Var Tape::mean_all(Var a) {
    const std::size_t n = value(a).size();
    if (n == 0) throw ConfigError("mean_all: empty tensor");
    double s = 0.0;
    for (double v : value(a).data) s += v;
    Var out = push(Tensor::scalar(s / static_cast<double>(n)), needs(a), {});
    nodes_[out.id].back = [a, out, n](Tape& t) {
        if (!t.needs(a)) return;
        const double g = t.grad_ref(out).item() / static_cast<double>(n);
        Tensor& dA = t.grad_ref(a);
        for (double& v : dA.data) v += g;
    };
    return out;
}

Var Tape::mean_over_rows(Var a) {
    const Tensor& A = value(a);
    if (A.rows == 0) throw ConfigError("mean_over_rows: empty tensor");
    Tensor C(1, A.cols, 0.0);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) C.at(0, j) += A.at(i, j);
    for (double& v : C.data) v /= static_cast<double>(A.rows);
    const std::size_t R = A.rows;
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out, R](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t i = 0; i < dA.rows; ++i)
            for (std::size_t j = 0; j < dA.cols; ++j)
                dA.at(i, j) += dC.at(0, j) / static_cast<double>(R);
    };
    return out;
}

Var Tape::group_mean_rows(Var a, std::size_t group) {
    const Tensor& A = value(a);
    if (group == 0 || A.rows % group != 0)
        throw ConfigError("group_mean_rows: row count not divisible by group size");
    const std::size_t G = A.rows / group;
    Tensor C(G, A.cols, 0.0);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) C.at(i / group, j) += A.at(i, j);
    for (double& v : C.data) v /= static_cast<double>(group);
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out, group](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t i = 0; i < dA.rows; ++i)
            for (std::size_t j = 0; j < dA.cols; ++j)
                dA.at(i, j) += dC.at(i / group, j) / static_cast<double>(group);
    };
    return out;
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rows != B.rows) throw ConfigError("concat_cols: row counts differ");
    Tensor C(A.rows, A.cols + B.cols, 0.0);
    for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t j = 0; j < A.cols; ++j) C.at(i, j) = A.at(i, j);
        for (std::size_t j = 0; j < B.cols; ++j) C.at(i, A.cols + j) = B.at(i, j);
    }
    const std::size_t ac = A.cols;
    Var out = push(std::move(C), needs(a) || needs(b), {});
    nodes_[out.id].back = [a, b, out, ac](Tape& t) {
        const Tensor& dC = t.grad_ref(out);
        if (t.needs(a)) {
            Tensor& dA = t.grad_ref(a);
            for (std::size_t i = 0; i < dA.rows; ++i)
                for (std::size_t j = 0; j < ac; ++j) dA.at(i, j) += dC.at(i, j);
        }
        if (t.needs(b)) {
            Tensor& dB = t.grad_ref(b);
            for (std::size_t i = 0; i < dB.rows; ++i)
                for (std::size_t j = 0; j < dB.cols; ++j) dB.at(i, j) += dC.at(i, ac + j);
        }
    };
    return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat_rows: no parts");
    const std::size_t cols = value(parts[0]).cols;
    std::size_t rows = 0;
    bool ng = false;
    for (Var p : parts) {
        if (value(p).cols != cols) throw ConfigError("concat_rows: column counts differ");
        rows += value(p).rows;
        ng = ng || needs(p);
    }
    Tensor C(rows, cols, 0.0);
    std::size_t r0 = 0;
    for (Var p : parts) {
        const Tensor& P = value(p);
        for (std::size_t i = 0; i < P.rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) C.at(r0 + i, j) = P.at(i, j);
        r0 += P.rows;
    }
    std::vector<Var> ps = parts;
    Var out = push(std::move(C), ng, {});
    nodes_[out.id].back = [ps, out](Tape& t) {
        const Tensor& dC = t.grad_ref(out);
        std::size_t r0 = 0;
        for (Var p : ps) {
            const std::size_t pr = t.value(p).rows;
            if (t.needs(p)) {
                Tensor& dP = t.grad_ref(p);
                for (std::size_t i = 0; i < pr; ++i)
                    for (std::size_t j = 0; j < dC.cols; ++j) dP.at(i, j) += dC.at(r0 + i, j);
            }
            r0 += pr;
        }
    };
    return out;
}

Var Tape::tile_rows(Var a, std::size_t times) {
    const Tensor& A = value(a);
    if (times == 0) throw ConfigError("tile_rows: zero repetitions");
    Tensor C(A.rows * times, A.cols, 0.0);
    for (std::size_t t = 0; t < times; ++t)
        for (std::size_t i = 0; i < A.rows; ++i)
            for (std::size_t j = 0; j < A.cols; ++j) C.at(t * A.rows + i, j) = A.at(i, j);
    const std::size_t R = A.rows;
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out, times, R](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < times; ++k)
            for (std::size_t i = 0; i < R; ++i)
                for (std::size_t j = 0; j < dA.cols; ++j) dA.at(i, j) += dC.at(k * R + i, j);
    };
    return out;
}

Var Tape::reshape(Var a, std::size_t r, std::size_t c) {
    const Tensor& A = value(a);
    if (r * c != A.size()) throw ConfigError("reshape: element count mismatch");
    Tensor C(r, c, 0.0);
    C.data = A.data;
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k];
    };
    return out;
}

Var Tape::row(Var a, std::size_t i) {
    const Tensor& A = value(a);
    if (i >= A.rows) throw ConfigError("row: index out of range");
    Tensor C(1, A.cols, 0.0);
    for (std::size_t j = 0; j < A.cols; ++j) C.at(0, j) = A.at(i, j);
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out, i](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t j = 0; j < dC.cols; ++j) dA.at(i, j) += dC.at(0, j);
    };
    return out;
}

Var Tape::l2_norm(Var a) {
    double s = 0.0;
    for (double v : value(a).data) s += v * v;
    const double n = std::sqrt(s);
    Var out = push(Tensor::scalar(n), needs(a), {});
    nodes_[out.id].back = [a, out](Tape& t) {
        if (!t.needs(a)) return;
        const double n = t.value(out).item();
        if (n == 0.0) return;  // subgradient 0 at the origin
        const double g = t.grad_ref(out).item() / n;
        const Tensor& A = t.value(a);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < A.size(); ++k) dA.data[k] += g * A.data[k];
    };
    return out;
}

Var Tape::sum_list(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw ConfigError("sum_list: empty list");
    double s = 0.0;
    bool ng = false;
    for (Var v : scalars) {
        if (value(v).size() != 1) throw ConfigError("sum_list: non-scalar entry");
        s += value(v).item();
        ng = ng || needs(v);
    }
    std::vector<Var> vs = scalars;
    Var out = push(Tensor::scalar(s), ng, {});
    nodes_[out.id].back = [vs, out](Tape& t) {
        const double g = t.grad_ref(out).item();
        for (Var v : vs)
            if (t.needs(v)) t.grad_ref(v).data[0] += g;
    };
    return out;
}

Var Tape::pair_distance_sum(Var a, const std::vector<IndexPair>& pairs) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (const auto& [i, j] : pairs) {
        if (i >= A.rows || j >= A.rows) throw ConfigError("pair_distance_sum: index out of range");
        double d2 = 0.0;
        for (std::size_t c = 0; c < A.cols; ++c) {
            const double d = A.at(i, c) - A.at(j, c);
            d2 += d * d;
        }
        s += std::sqrt(d2);
    }
    std::vector<IndexPair> ps = pairs;
    Var out = push(Tensor::scalar(s), needs(a), {});
    nodes_[out.id].back = [a, out, ps](Tape& t) {
        if (!t.needs(a)) return;
        const double g = t.grad_ref(out).item();
        const Tensor& A = t.value(a);
        Tensor& dA = t.grad_ref(a);
        for (const auto& [i, j] : ps) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < A.cols; ++c) {
                const double d = A.at(i, c) - A.at(j, c);
                d2 += d * d;
            }
            const double dist = std::sqrt(d2);
            if (dist == 0.0) continue;  // subgradient 0 for coincident rows
            for (std::size_t c = 0; c < A.cols; ++c) {
                const double d = (A.at(i, c) - A.at(j, c)) / dist;
                dA.at(i, c) += g * d;
                dA.at(j, c) -= g * d;
            }
        }
    };
    return out;
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
    const Tensor& A = value(a);
    Tensor mask(A.rows, A.cols, 0.0);
    const double keep = 1.0 - rate;
    for (double& v : mask.data) v = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
    Tensor C = A;
    for (std::size_t k = 0; k < C.size(); ++k) C.data[k] *= mask.data[k];
    Var out = push(std::move(C), needs(a), {});
    nodes_[out.id].back = [a, out, mask](Tape& t) {
        if (!t.needs(a)) return;
        const Tensor& dC = t.grad_ref(out);
        Tensor& dA = t.grad_ref(a);
        for (std::size_t k = 0; k < dC.size(); ++k) dA.data[k] += dC.data[k] * mask.data[k];
    };
    return out;
}

void Tape::backward(Var loss) {
    if (value(loss).size() != 1) throw ConfigError("backward: loss must be scalar");
    grad_ref(loss).data[0] = 1.0;
    for (std::size_t k = loss.id + 1; k-- > 0;) {
        Node& n = nodes_[k];
        if (n.needs_grad && n.back) n.back(*this);
    }
}

std::vector<Tensor> gradients(Tape& tape, Var loss, const std::vector<Var>& leaves) {
    tape.backward(loss);
    std::vector<Tensor> out;
    out.reserve(leaves.size());
    for (Var v : leaves) out.push_back(tape.grad(v));
    return out;
}

}  // namespace metawarm
