#pragma once
// Named parameter slots: value, gradient accumulator, Adam moment buffers.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dreamlab/tensor.hpp"

namespace dreamlab {

struct ParamSlot {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;   // lazily sized on first optimizer step
    Tensor adam_v;
};

class ParamStore {
public:
    ParamSlot& add(std::string name, Tensor init) {
        if (index_.contains(name)) {
            throw std::invalid_argument("ParamStore: duplicate slot " + name);
        }
        ParamSlot slot;
        slot.name = name;
        slot.grad = Tensor::zeros(init.shape());
        slot.value = std::move(init);
        index_.emplace(std::move(name), slots_.size());
        slots_.push_back(std::move(slot));
        return slots_.back();
    }

    ParamSlot& slot(std::string_view name) {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) {
            throw std::out_of_range("ParamStore: no slot named " + std::string(name));
        }
        return slots_[it->second];
    }
    const ParamSlot& slot(std::string_view name) const {
        return const_cast<ParamStore*>(this)->slot(name);
    }

    bool contains(std::string_view name) const {
        return index_.contains(std::string(name));
    }

    std::size_t size() const { return slots_.size(); }
    ParamSlot& at(std::size_t i) { return slots_[i]; }
    const ParamSlot& at(std::size_t i) const { return slots_[i]; }

    // slots in insertion order; iteration order is part of the public
    // contract (checkpoints, gradient flattening)
    std::vector<ParamSlot>& slots() { return slots_; }
    const std::vector<ParamSlot>& slots() const { return slots_; }

    void zero_grad() {
        for (auto& s : slots_) s.grad.fill(0.0);
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& s : slots_) n += s.value.size();
        return n;
    }

    std::vector<double> flatten_values() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const auto& s : slots_) {
            out.insert(out.end(), s.value.data(), s.value.data() + s.value.size());
        }
        return out;
    }

    std::vector<double> flatten_grads() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const auto& s : slots_) {
            out.insert(out.end(), s.grad.data(), s.grad.data() + s.grad.size());
        }
        return out;
    }

    // flat coordinate -> (slot, offset)
    double& value_coord(std::size_t flat) {
        for (auto& s : slots_) {
            if (flat < s.value.size()) return s.value[flat];
            flat -= s.value.size();
        }
        throw std::out_of_range("ParamStore: flat coordinate out of range");
    }

    std::int64_t adam_step_count = 0;

private:
    std::vector<ParamSlot> slots_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dreamlab
