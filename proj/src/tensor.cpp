#include "vdrv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "vdrv/kernels.hpp"

namespace vdrv {

size_t shape_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

std::string shape_str(const Tensor& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

TensorPtr Tensor::zeros(std::vector<int> shape) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(shape_numel(t->shape), 0.0);
    return t;
}

TensorPtr Tensor::full(std::vector<int> shape, double v) {
    auto t = zeros(std::move(shape));
    std::fill(t->data.begin(), t->data.end(), v);
    return t;
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size())
        throw DimensionError("from: " + std::to_string(values.size()) + " values for shape");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(values);
    return t;
}

TensorPtr Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
    auto t = zeros(std::move(shape));
    for (double& v : t->data) v = stddev * rng.gaussian();
    return t;
}

TensorPtr Tensor::scalar(double v) { return from({1}, {v}); }

void backward(const TensorPtr& loss) {
    if (loss->size() != 1) throw ContractError("backward requires a scalar loss");
    // Topological order by iterative DFS.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* t = *it;
        if (t->backward_fn) {
            t->ensure_grad();
            for (const auto& p : t->parents) p->ensure_grad();
            t->backward_fn(*t);
        }
    }
}

namespace ag {

namespace {

bool track(const std::initializer_list<TensorPtr>& ps) {
    for (const auto& p : ps)
        if (p->requires_grad || p->backward_fn) return true;
    return false;
}

TensorPtr make_node(std::vector<int> shape, std::vector<TensorPtr> parents) {
    auto t = Tensor::zeros(std::move(shape));
    t->parents = std::move(parents);
    return t;
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        throw DimensionError(std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double value(const TensorPtr& t) {
    if (t->size() != 1) throw ContractError("value: tensor is not scalar");
    return t->data[0];
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->shape[1] != b->shape[0])
        throw DimensionError("matmul: " + shape_str(*a) + " x " + shape_str(*b));
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = make_node({m, n}, {a, b});
    kernels::matmul(a->data.data(), b->data.data(), out->data.data(), m, k, n);
    if (track({a, b})) {
        TensorPtr pa = a, pb = b;
        out->backward_fn = [pa, pb, m, k, n](Tensor& self) {
            // dA = dC * B^T, dB = A^T * dC; both via the one matmul kernel.
            std::vector<double> bt(static_cast<size_t>(k) * n);
            kernels::transpose(pb->data.data(), bt.data(), k, n);
            std::vector<double> da(static_cast<size_t>(m) * k);
            kernels::matmul(self.grad.data(), bt.data(), da.data(), m, n, k);
            for (size_t i = 0; i < da.size(); ++i) pa->grad[i] += da[i];

            std::vector<double> at(static_cast<size_t>(m) * k);
            kernels::transpose(pa->data.data(), at.data(), m, k);
            std::vector<double> db(static_cast<size_t>(k) * n);
            kernels::matmul(at.data(), self.grad.data(), db.data(), k, m, n);
            for (size_t i = 0; i < db.size(); ++i) pb->grad[i] += db[i];
        };
    }
    return out;
}

TensorPtr transpose(const TensorPtr& a) {
    if (a->rank() != 2) throw DimensionError("transpose: " + shape_str(*a));
    const int m = a->shape[0], n = a->shape[1];
    auto out = make_node({n, m}, {a});
    kernels::transpose(a->data.data(), out->data.data(), m, n);
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa, m, n](Tensor& self) {
            std::vector<double> g(static_cast<size_t>(m) * n);
            kernels::transpose(self.grad.data(), g.data(), n, m);
            for (size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i];
        };
    }
    return out;
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    same_shape(*a, *b, "add");
    auto out = make_node(a->shape, {a, b});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (track({a, b})) {
        TensorPtr pa = a, pb = b;
        out->backward_fn = [pa, pb](Tensor& self) {
            for (size_t i = 0; i < self.size(); ++i) {
                pa->grad[i] += self.grad[i];
                pb->grad[i] += self.grad[i];
            }
        };
    }
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    same_shape(*a, *b, "sub");
    auto out = make_node(a->shape, {a, b});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (track({a, b})) {
        TensorPtr pa = a, pb = b;
        out->backward_fn = [pa, pb](Tensor& self) {
            for (size_t i = 0; i < self.size(); ++i) {
                pa->grad[i] += self.grad[i];
                pb->grad[i] -= self.grad[i];
            }
        };
    }
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    same_shape(*a, *b, "mul");
    auto out = make_node(a->shape, {a, b});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (track({a, b})) {
        TensorPtr pa = a, pb = b;
        out->backward_fn = [pa, pb](Tensor& self) {
            for (size_t i = 0; i < self.size(); ++i) {
                pa->grad[i] += self.grad[i] * pb->data[i];
                pb->grad[i] += self.grad[i] * pa->data[i];
            }
        };
    }
    return out;
}

TensorPtr scale(const TensorPtr& a, double s) {
    auto out = make_node(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = s * a->data[i];
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa, s](Tensor& self) {
            for (size_t i = 0; i < self.size(); ++i) pa->grad[i] += s * self.grad[i];
        };
    }
    return out;
}

TensorPtr silu(const TensorPtr& a) {
    auto out = make_node(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * sigmoid(a->data[i]);
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa](Tensor& self) {
            for (size_t i = 0; i < self.size(); ++i) {
                const double s = sigmoid(pa->data[i]);
                pa->grad[i] += self.grad[i] * s * (1.0 + pa->data[i] * (1.0 - s));
            }
        };
    }
    return out;
}

TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, double eps) {
    if (x->cols() != gain->rows() * gain->cols() || gain->size() != static_cast<size_t>(x->cols()))
        throw DimensionError("layer_norm: x " + shape_str(*x) + " gain " + shape_str(*gain));
    const int m = x->rows(), d = x->cols();
    auto out = make_node(x->shape, {x, gain});
    std::vector<double> inv_std(m), xhat(static_cast<size_t>(m) * d);
    for (int i = 0; i < m; ++i) {
        const double* xi = x->data.data() + static_cast<size_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (int j = 0; j < d; ++j) {
            const double h = (xi[j] - mean) * is;
            xhat[static_cast<size_t>(i) * d + j] = h;
            out->data[static_cast<size_t>(i) * d + j] = h * gain->data[j];
        }
    }
    if (track({x, gain})) {
        TensorPtr px = x, pg = gain;
        out->backward_fn = [px, pg, m, d, inv_std = std::move(inv_std), xhat = std::move(xhat)](Tensor& self) {
            for (int i = 0; i < m; ++i) {
                const size_t off = static_cast<size_t>(i) * d;
                double sum_dy = 0.0, sum_dyx = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double dy = self.grad[off + j] * pg->data[j];
                    sum_dy += dy;
                    sum_dyx += dy * xhat[off + j];
                    pg->grad[j] += self.grad[off + j] * xhat[off + j];
                }
                const double mean_dy = sum_dy / d, mean_dyx = sum_dyx / d;
                for (int j = 0; j < d; ++j) {
                    const double dy = self.grad[off + j] * pg->data[j];
                    px->grad[off + j] += inv_std[i] * (dy - mean_dy - xhat[off + j] * mean_dyx);
                }
            }
        };
    }
    return out;
}

TensorPtr softmax_rows(const TensorPtr& scores) {
    const int m = scores->rows(), n = scores->cols();
    auto out = make_node(scores->shape, {scores});
    for (int i = 0; i < m; ++i) {
        const size_t off = static_cast<size_t>(i) * n;
        double mx = scores->data[off];
        for (int j = 1; j < n; ++j) mx = std::max(mx, scores->data[off + j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            const double e = std::exp(scores->data[off + j] - mx);
            out->data[off + j] = e;
            sum += e;
        }
        if (sum == 0.0) throw ContractError("softmax row " + std::to_string(i) + " fully masked");
        for (int j = 0; j < n; ++j) out->data[off + j] /= sum;
    }
    if (track({scores})) {
        TensorPtr ps = scores;
        out->backward_fn = [ps, m, n](Tensor& self) {
            for (int i = 0; i < m; ++i) {
                const size_t off = static_cast<size_t>(i) * n;
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += self.grad[off + j] * self.data[off + j];
                for (int j = 0; j < n; ++j)
                    ps->grad[off + j] += self.data[off + j] * (self.grad[off + j] - dot);
            }
        };
    }
    return out;
}

TensorPtr masked_softmax(const TensorPtr& scores, const TensorPtr& mask) {
    same_shape(*scores, *mask, "masked_softmax");
    const int m = mask->rows(), n = mask->cols();
    for (int i = 0; i < m; ++i) {
        bool any = false;
        for (int j = 0; j < n && !any; ++j) any = mask->at(i, j) == 0.0;
        if (!any) throw ContractError("masked_softmax: row " + std::to_string(i) + " has no allowed position");
    }
    // Mask is a constant; route through add with a no-grad tensor.
    auto masked = make_node(scores->shape, {scores});
    for (size_t i = 0; i < masked->size(); ++i) masked->data[i] = scores->data[i] + mask->data[i];
    if (track({scores})) {
        TensorPtr ps = scores;
        masked->backward_fn = [ps](Tensor& self) {
            for (size_t i = 0; i < self.size(); ++i) ps->grad[i] += self.grad[i];
        };
    }
    return softmax_rows(masked);
}

TensorPtr concat_rows(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    const int d = parts[0]->cols();
    int total = 0;
    for (const auto& p : parts) {
        if (p->cols() != d)
            throw DimensionError("concat_rows: width " + std::to_string(p->cols()) + " vs " + std::to_string(d));
        total += p->rows();
    }
    auto out = make_node({total, d}, {});
    bool need = false;
    int r = 0;
    for (const auto& p : parts) {
        std::copy(p->data.begin(), p->data.end(), out->data.begin() + static_cast<size_t>(r) * d);
        r += p->rows();
        out->parents.push_back(p);
        need = need || p->requires_grad || p->backward_fn;
    }
    if (need) {
        auto ps = parts;
        out->backward_fn = [ps, d](Tensor& self) {
            size_t off = 0;
            for (const auto& p : ps) {
                for (size_t i = 0; i < p->size(); ++i) p->grad[i] += self.grad[off + i];
                off += p->size();
            }
        };
    }
    return out;
}

TensorPtr slice_rows(const TensorPtr& a, int r0, int r1) {
    if (r0 < 0 || r1 < r0 || r1 > a->rows())
        throw DimensionError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) + ") of " + shape_str(*a));
    const int d = a->cols(), m = r1 - r0;
    auto out = make_node({m, d}, {a});
    std::copy(a->data.begin() + static_cast<size_t>(r0) * d, a->data.begin() + static_cast<size_t>(r1) * d,
              out->data.begin());
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa, r0, d](Tensor& self) {
            const size_t off = static_cast<size_t>(r0) * d;
            for (size_t i = 0; i < self.size(); ++i) pa->grad[off + i] += self.grad[i];
        };
    }
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const int m = parts[0]->rows();
    int total = 0;
    for (const auto& p : parts) {
        if (p->rows() != m) throw DimensionError("concat_cols: row count mismatch");
        total += p->cols();
    }
    auto out = make_node({m, total}, {});
    bool need = false;
    int c = 0;
    for (const auto& p : parts) {
        const int w = p->cols();
        for (int i = 0; i < m; ++i)
            std::copy(p->data.begin() + static_cast<size_t>(i) * w, p->data.begin() + static_cast<size_t>(i + 1) * w,
                      out->data.begin() + static_cast<size_t>(i) * total + c);
        c += w;
        out->parents.push_back(p);
        need = need || p->requires_grad || p->backward_fn;
    }
    if (need) {
        auto ps = parts;
        out->backward_fn = [ps, m, total](Tensor& self) {
            int c = 0;
            for (const auto& p : ps) {
                const int w = p->cols();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j)
                        p->grad[static_cast<size_t>(i) * w + j] +=
                            self.grad[static_cast<size_t>(i) * total + c + j];
                c += w;
            }
        };
    }
    return out;
}

TensorPtr slice_cols(const TensorPtr& a, int c0, int c1) {
    if (c0 < 0 || c1 < c0 || c1 > a->cols())
        throw DimensionError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) + ") of " + shape_str(*a));
    const int m = a->rows(), n = a->cols(), w = c1 - c0;
    auto out = make_node({m, w}, {a});
    for (int i = 0; i < m; ++i)
        std::copy(a->data.begin() + static_cast<size_t>(i) * n + c0, a->data.begin() + static_cast<size_t>(i) * n + c1,
                  out->data.begin() + static_cast<size_t>(i) * w);
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa, m, n, w, c0](Tensor& self) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    pa->grad[static_cast<size_t>(i) * n + c0 + j] += self.grad[static_cast<size_t>(i) * w + j];
        };
    }
    return out;
}

TensorPtr gather_rows(const TensorPtr& table, const std::vector<int>& ids) {
    const int v = table->rows(), d = table->cols();
    for (int id : ids)
        if (id < 0 || id >= v) throw VocabError("row id " + std::to_string(id) + " out of range (" + std::to_string(v) + ")");
    auto out = make_node({static_cast<int>(ids.size()), d}, {table});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(table->data.begin() + static_cast<size_t>(ids[i]) * d,
                  table->data.begin() + static_cast<size_t>(ids[i] + 1) * d, out->data.begin() + i * d);
    if (track({table})) {
        TensorPtr pt = table;
        out->backward_fn = [pt, ids, d](Tensor& self) {
            for (size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j)
                    pt->grad[static_cast<size_t>(ids[i]) * d + j] += self.grad[i * d + j];
        };
    }
    return out;
}

TensorPtr merge_rows(const TensorPtr& base, const std::vector<TensorPtr>& parts,
                     const std::vector<std::vector<int>>& idx) {
    if (parts.size() != idx.size()) throw InternalError("merge_rows: parts/idx mismatch");
    const int n = base->rows(), d = base->cols();
    auto out = make_node(base->shape, {base});
    out->data = base->data;
    bool need = base->requires_grad || static_cast<bool>(base->backward_fn);
    for (size_t g = 0; g < parts.size(); ++g) {
        if (parts[g]->rows() != static_cast<int>(idx[g].size()) || parts[g]->cols() != d)
            throw InternalError("merge_rows: part " + std::to_string(g) + " shape mismatch");
        for (size_t r = 0; r < idx[g].size(); ++r) {
            const int i = idx[g][r];
            if (i < 0 || i >= n) throw InternalError("merge_rows: index out of bounds");
            for (int j = 0; j < d; ++j) out->at(i, j) += parts[g]->at(static_cast<int>(r), j);
        }
        out->parents.push_back(parts[g]);
        need = need || parts[g]->requires_grad || parts[g]->backward_fn;
    }
    if (need) {
        TensorPtr pb = base;
        auto ps = parts;
        out->backward_fn = [pb, ps, idx, d](Tensor& self) {
            for (size_t i = 0; i < self.size(); ++i) pb->grad[i] += self.grad[i];
            for (size_t g = 0; g < ps.size(); ++g)
                for (size_t r = 0; r < idx[g].size(); ++r)
                    for (int j = 0; j < d; ++j)
                        ps[g]->grad[r * d + j] += self.grad[static_cast<size_t>(idx[g][r]) * d + j];
        };
    }
    return out;
}

TensorPtr mean_rows(const TensorPtr& a) {
    const int m = a->rows(), d = a->cols();
    if (m < 1) throw DimensionError("mean_rows: empty input");
    auto out = make_node({1, d}, {a});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j) out->data[j] += a->at(i, j);
    for (int j = 0; j < d; ++j) out->data[j] /= m;
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa, m, d](Tensor& self) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < d; ++j) pa->grad[static_cast<size_t>(i) * d + j] += self.grad[j] / m;
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& a) {
    auto out = make_node({1}, {a});
    for (double v : a->data) out->data[0] += v;
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa](Tensor& self) {
            for (size_t i = 0; i < pa->size(); ++i) pa->grad[i] += self.grad[0];
        };
    }
    return out;
}

TensorPtr sum_sq(const TensorPtr& a) {
    auto out = make_node({1}, {a});
    for (double v : a->data) out->data[0] += v * v;
    if (track({a})) {
        TensorPtr pa = a;
        out->backward_fn = [pa](Tensor& self) {
            for (size_t i = 0; i < pa->size(); ++i) pa->grad[i] += 2.0 * pa->data[i] * self.grad[0];
        };
    }
    return out;
}

TensorPtr mse(const TensorPtr& pred, const TensorPtr& target) {
    same_shape(*pred, *target, "mse");
    const size_t n = pred->size();
    auto out = make_node({1}, {pred});
    for (size_t i = 0; i < n; ++i) {
        const double e = pred->data[i] - target->data[i];
        out->data[0] += e * e;
    }
    out->data[0] /= static_cast<double>(n);
    if (track({pred})) {
        TensorPtr pp = pred, pt = target;
        out->backward_fn = [pp, pt, n](Tensor& self) {
            const double s = 2.0 * self.grad[0] / static_cast<double>(n);
            for (size_t i = 0; i < n; ++i) pp->grad[i] += s * (pp->data[i] - pt->data[i]);
        };
    }
    return out;
}

TensorPtr cross_entropy_mean(const TensorPtr& logits, const std::vector<int>& targets,
                             const std::vector<bool>& mask) {
    const int m = logits->rows(), v = logits->cols();
    if (static_cast<int>(targets.size()) != m || static_cast<int>(mask.size()) != m)
        throw DimensionError("cross_entropy_mean: " + std::to_string(m) + " rows, " +
                             std::to_string(targets.size()) + " targets, " + std::to_string(mask.size()) + " mask");
    int count = 0;
    for (bool b : mask) count += b;
    if (count == 0) throw ContractError("cross_entropy_mean: empty loss mask");
    auto out = make_node({1}, {logits});
    std::vector<double> probs(static_cast<size_t>(m) * v);
    for (int i = 0; i < m; ++i) {
        if (!mask[i]) continue;
        if (targets[i] < 0 || targets[i] >= v) throw VocabError("target id out of range");
        const size_t off = static_cast<size_t>(i) * v;
        double mx = logits->data[off];
        for (int j = 1; j < v; ++j) mx = std::max(mx, logits->data[off + j]);
        double sum = 0.0;
        for (int j = 0; j < v; ++j) {
            probs[off + j] = std::exp(logits->data[off + j] - mx);
            sum += probs[off + j];
        }
        for (int j = 0; j < v; ++j) probs[off + j] /= sum;
        out->data[0] -= std::log(probs[off + targets[i]]);
    }
    out->data[0] /= count;
    if (track({logits})) {
        TensorPtr pl = logits;
        out->backward_fn = [pl, targets, mask, count, m, v, probs = std::move(probs)](Tensor& self) {
            const double s = self.grad[0] / count;
            for (int i = 0; i < m; ++i) {
                if (!mask[i]) continue;
                const size_t off = static_cast<size_t>(i) * v;
                for (int j = 0; j < v; ++j)
                    pl->grad[off + j] += s * (probs[off + j] - (j == targets[i] ? 1.0 : 0.0));
            }
        };
    }
    return out;
}

}  // namespace ag

}  // namespace vdrv
