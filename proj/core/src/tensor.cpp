#include "srm/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace srm {

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

Tensor& ParamStore::add_entry(const std::string& name, Tensor tensor) {
    if (has(name)) {
        throw ValidationError("duplicate parameter name: " + name);
    }
    entries_.push_back({name, std::move(tensor)});
    return entries_.back().tensor;
}

Tensor& ParamStore::add(const std::string& name, int n) {
    return add_entry(name, Tensor(n));
}

Tensor& ParamStore::add(const std::string& name, int rows, int cols) {
    return add_entry(name, Tensor(rows, cols));
}

Tensor& ParamStore::at(const std::string& name) {
    for (auto& e : entries_) {
        if (e.name == name) return e.tensor;
    }
    throw ValidationError("unknown parameter: " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return e.tensor;
    }
    throw ValidationError("unknown parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return true;
    }
    return false;
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
}

void ParamStore::zero() {
    for (auto& e : entries_) e.tensor.fill(0.0);
}

ParamStore ParamStore::zeros_like(const ParamStore& other) {
    ParamStore out;
    for (const auto& e : other.entries_) {
        Tensor t = e.tensor;
        t.fill(0.0);
        out.entries_.push_back({e.name, std::move(t)});
    }
    return out;
}

}  // namespace srm
