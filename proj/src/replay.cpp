#include "frap/replay.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace frap {

SumTree::SumTree(std::size_t capacity) : capacity_(capacity), leaves_(1)
{
    if (capacity == 0) throw std::invalid_argument("sum tree capacity must be positive");
    while (leaves_ < capacity) leaves_ *= 2;
    tree_.assign(2 * leaves_, 0.0);
}

void SumTree::set(std::size_t index, double value)
{
    if (index >= capacity_) throw std::out_of_range("sum tree index out of range");
    if (!(value >= 0) || !std::isfinite(value)) throw std::invalid_argument("sum tree weights must be finite and >= 0");
    std::size_t i = leaves_ + index;
    tree_[i] = value;
    // Parents are recomputed from their children, so no drift accumulates.
    for (i /= 2; i >= 1; i /= 2) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
}

std::size_t SumTree::find(double u) const
{
    std::size_t i = 1;
    while (i < leaves_) {
        const double left = tree_[2 * i];
        if (u < left || tree_[2 * i + 1] <= 0) {
            i = 2 * i;
        } else {
            u -= left;
            i = 2 * i + 1;
        }
    }
    std::size_t leaf = i - leaves_;
    // Rounding can walk onto an empty leaf at the right edge; step back.
    while (leaf > 0 && (leaf >= capacity_ || tree_[leaves_ + leaf] <= 0)) --leaf;
    return leaf;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, double alpha) : capacity_(capacity), alpha_(alpha), tree_(capacity)
{
    if (!(alpha >= 0)) throw std::invalid_argument("alpha must be >= 0");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::add(Transition t)
{
    if (t.priority <= 0 || !std::isfinite(t.priority)) t.priority = max_priority_;
    max_priority_ = std::max(max_priority_, t.priority);
    t.sequence = next_sequence_++;
    const double w = std::pow(t.priority, alpha_);
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[head_] = std::move(t);
    }
    tree_.set(head_, w);
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
}

double ReplayBuffer::probability(std::size_t slot) const
{
    if (slot >= size_) throw std::out_of_range("replay slot out of range");
    return tree_.get(slot) / tree_.total();
}

ReplayBuffer::Sample ReplayBuffer::sample(std::size_t batch, double beta, std::mt19937_64& rng) const
{
    if (size_ == 0) throw std::logic_error("cannot sample from an empty replay buffer");
    Sample s;
    s.slots.reserve(batch);
    s.weights.reserve(batch);
    const double total = tree_.total();
    std::uniform_real_distribution<double> u(0.0, total);
    double max_w = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t slot = tree_.find(u(rng));
        const double p = tree_.get(slot) / total;
        const double w = std::pow(static_cast<double>(size_) * p, -beta);
        s.slots.push_back(slot);
        s.weights.push_back(w);
        max_w = std::max(max_w, w);
    }
    for (double& w : s.weights) w /= max_w;
    return s;
}

void ReplayBuffer::update_priorities(std::span<const std::size_t> slots, std::span<const double> priorities)
{
    if (slots.size() != priorities.size()) throw std::invalid_argument("slot/priority count mismatch");
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i] >= size_) throw std::out_of_range("replay slot out of range");
        const double p = priorities[i];
        if (!(p > 0) || !std::isfinite(p)) throw std::invalid_argument("priorities must be finite and positive");
        items_[slots[i]].priority = p;
        max_priority_ = std::max(max_priority_, p);
        tree_.set(slots[i], std::pow(p, alpha_));
    }
}

}  // namespace frap
