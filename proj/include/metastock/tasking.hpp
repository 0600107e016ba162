#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "metastock/market_data.hpp"

namespace metastock {

/// A fixed-size bag of samples, referenced by index into the pool it was built from.
struct Task {
    std::size_t id = 0;
    std::vector<std::size_t> members;
    double difficulty = 0.0;
    double weight = 1.0;
};

/// Shuffles the pool indices with `seed`, cuts consecutive chunks of `task_size`
/// and drops the remainder. Difficulty is computed from Sample::difficulty, so
/// the pool must already carry per-sample scores.
std::vector<Task> build_tasks(std::span<const Sample> pool, std::size_t task_size, std::uint64_t seed);

/// Softmax over z-standardized task difficulties, rescaled so the mean weight is 1.
std::vector<double> softmax_weights(std::span<const double> difficulties);

/// Writes softmax_weights of the tasks' difficulties into Task::weight and returns them.
/// Throws std::invalid_argument naming the first task with a non-finite difficulty.
std::vector<double> compute_weights(std::span<Task> tasks);

struct Terciles {
    std::vector<Task> easy;
    std::vector<Task> medium;
    std::vector<Task> hard;
};

/// Ascending by (difficulty, id); group sizes differ by at most one with the
/// remainder going to the earlier groups.
Terciles tercile_partition(std::span<const Task> tasks);

/// One JSON object per line: {"id","size","difficulty","weight"}.
void write_task_manifest(const std::filesystem::path& path, std::span<const Task> tasks);

}  // namespace metastock
