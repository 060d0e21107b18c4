#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "probsa/autodiff/tape.hpp"
#include "probsa/error.hpp"

namespace probsa::model {

/// Ordered collection of named trainable tensors.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        ad::Tensor value;
    };

    std::size_t add(std::string name, ad::Tensor value) {
        for (const auto& e : entries_) {
            if (e.name == name) throw Error("duplicate parameter name '" + name + "'");
        }
        value.set_requires_grad(true);
        entries_.push_back({std::move(name), std::move(value)});
        return entries_.size() - 1;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    ad::Tensor& at(std::size_t i) { return entries_.at(i).value; }
    const ad::Tensor& at(std::size_t i) const { return entries_.at(i).value; }
    const std::string& name(std::size_t i) const { return entries_.at(i).name; }
    std::vector<Entry>& entries() noexcept { return entries_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name == name) return i;
        }
        throw Error("no parameter named '" + name + "'");
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.value.zero_grad();
    }

    /// Copies of the current values, in order.
    std::vector<ad::Tensor> snapshot() const {
        std::vector<ad::Tensor> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.emplace_back(e.value.shape(), e.value.data());
        return out;
    }

    void restore(const std::vector<ad::Tensor>& values) {
        if (values.size() != entries_.size()) throw ShapeError("restore: parameter count mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i].shape() != entries_[i].value.shape()) throw ShapeError("restore: shape mismatch for " + entries_[i].name);
            entries_[i].value.data() = values[i].data();
        }
    }

private:
    std::vector<Entry> entries_;
};

/// Uniform in +-sqrt(1 / fan_in).
inline ad::Tensor uniform_init(ad::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto t = ad::Tensor::zeros(std::move(shape));
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

/// Records each parameter on a tape at most once.
///
/// Built over a mutable store, gradients flow back into the store; built
/// over a const store, the parameters enter the tape as constants.
class BoundParams {
public:
    BoundParams(ad::Tape& tape, ParameterStore& store) : tape_(tape), mutable_(&store), store_(store), vars_(store.size()) {}
    BoundParams(ad::Tape& tape, const ParameterStore& store) : tape_(tape), store_(store), vars_(store.size()) {}

    ad::Var operator[](std::size_t id) {
        auto& v = vars_.at(id);
        if (!v.valid()) {
            v = mutable_ ? tape_.param(mutable_->at(id)) : tape_.constant(ad::Tensor(store_.at(id).shape(), store_.at(id).data()));
        }
        return v;
    }

    ad::Tape& tape() noexcept { return tape_; }

private:
    ad::Tape& tape_;
    ParameterStore* mutable_ = nullptr;
    const ParameterStore& store_;
    std::vector<ad::Var> vars_;
};

}  // namespace probsa::model
