#pragma once

#include <map>
#include <string>
#include <vector>

#include "vdrv/tensor.hpp"

namespace vdrv {

// Named parameter tensors with per-parameter trainable flag and Adam moments.
// Frozen parameters are skipped entirely by adam_step: data, moments and step
// count stay bit-identical.
class ParamStore {
public:
    struct Entry {
        TensorPtr tensor;
        bool trainable = true;
        std::vector<double> m, v;  // Adam moments, parameter-shaped
        long step = 0;
    };

    TensorPtr add(const std::string& name, TensorPtr t);
    TensorPtr get(const std::string& name) const;
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;

    // Deterministic (sorted) iteration order.
    std::vector<std::string> names() const;

    void zero_grad();
    void set_trainable(const std::string& name, bool trainable);
    void set_all_trainable(bool trainable);
    // Marks every parameter whose name starts with one of the prefixes.
    void set_trainable_by_prefix(const std::vector<std::string>& prefixes, bool trainable);

    // Scales all trainable grads so their global L2 norm is at most max_norm.
    void clip_grad_norm(double max_norm);

    size_t total_params() const;

private:
    std::map<std::string, Entry> entries_;
};

// One Adam update over every trainable parameter that has a grad buffer.
void adam_step(ParamStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

}  // namespace vdrv
