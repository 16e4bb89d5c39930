#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "frap/state.hpp"

namespace frap {

struct Transition {
    TrafficState state;
    int action = 0;
    double reward = 0;
    TrafficState next_state;
    bool done = false;
    double priority = 0;  // <= 0 means "use the buffer's current max priority"
    std::uint64_t sequence = 0;  // assigned by the buffer on insertion
};

/// Binary sum tree over non-negative leaf weights.
class SumTree {
public:
    explicit SumTree(std::size_t capacity);

    void set(std::size_t index, double value);
    double get(std::size_t index) const { return tree_[leaves_ + index]; }
    double total() const { return tree_[1]; }
    /// Leaf whose cumulative range contains u, for u in [0, total()).
    std::size_t find(double u) const;
    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    std::size_t leaves_;
    std::vector<double> tree_;
};

/// Proportional prioritized replay with FIFO eviction.
/// P(i) = p_i^alpha / sum_j p_j^alpha.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, double alpha);

    void add(Transition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t total_added() const { return next_sequence_; }
    const Transition& at(std::size_t slot) const { return items_.at(slot); }

    double probability(std::size_t slot) const;
    double max_priority() const { return max_priority_; }

    struct Sample {
        std::vector<std::size_t> slots;
        std::vector<double> weights;  // importance weights, max-normalised within the batch
    };
    /// Independent proportional draws with replacement.
    Sample sample(std::size_t batch, double beta, std::mt19937_64& rng) const;
    void update_priorities(std::span<const std::size_t> slots, std::span<const double> priorities);

private:
    std::size_t capacity_;
    double alpha_;
    std::vector<Transition> items_;
    SumTree tree_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;
    std::uint64_t next_sequence_ = 0;
    double max_priority_ = 1.0;
};

}  // namespace frap
