#include "vdrv/param_store.hpp"

#include <cmath>

namespace vdrv {

TensorPtr ParamStore::add(const std::string& name, TensorPtr t) {
    if (entries_.count(name)) throw InternalError("duplicate parameter name: " + name);
    t->requires_grad = true;
    Entry e;
    e.tensor = t;
    e.m.assign(t->size(), 0.0);
    e.v.assign(t->size(), 0.0);
    entries_.emplace(name, std::move(e));
    return t;
}

TensorPtr ParamStore::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InternalError("unknown parameter: " + name);
    return it->second.tensor;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InternalError("unknown parameter: " + name);
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw InternalError("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
}

void ParamStore::zero_grad() {
    for (auto& [_, e] : entries_) {
        e.tensor->ensure_grad();
        e.tensor->zero_grad();
    }
}

void ParamStore::set_trainable(const std::string& name, bool trainable) {
    entry(name).trainable = trainable;
}

void ParamStore::set_all_trainable(bool trainable) {
    for (auto& [_, e] : entries_) e.trainable = trainable;
}

void ParamStore::set_trainable_by_prefix(const std::vector<std::string>& prefixes, bool trainable) {
    for (auto& [name, e] : entries_)
        for (const auto& p : prefixes)
            if (name.rfind(p, 0) == 0) e.trainable = trainable;
}

void ParamStore::clip_grad_norm(double max_norm) {
    double total = 0.0;
    for (auto& [_, e] : entries_) {
        if (!e.trainable || e.tensor->grad.empty()) continue;
        for (double g : e.tensor->grad) total += g * g;
    }
    total = std::sqrt(total);
    if (total <= max_norm || total == 0.0) return;
    const double s = max_norm / total;
    for (auto& [_, e] : entries_) {
        if (!e.trainable || e.tensor->grad.empty()) continue;
        for (double& g : e.tensor->grad) g *= s;
    }
}

size_t ParamStore::total_params() const {
    size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.tensor->size();
    return n;
}

void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps) {
    for (const auto& name : store.names()) {
        auto& e = store.entry(name);
        if (!e.trainable || e.tensor->grad.empty()) continue;
        e.step += 1;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(e.step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(e.step));
        auto& t = *e.tensor;
        for (size_t i = 0; i < t.size(); ++i) {
            const double g = t.grad[i];
            e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g;
            e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            t.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace vdrv
