#include "metastock/tasking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "metastock/wavelet.hpp"

namespace metastock {

std::vector<Task> build_tasks(std::span<const Sample> pool, std::size_t task_size, std::uint64_t seed) {
    if (task_size == 0) throw std::invalid_argument("task size must be positive");
    if (pool.size() < task_size) {
        throw std::invalid_argument("pool of " + std::to_string(pool.size()) + " samples is smaller than task size " +
                                    std::to_string(task_size) + "; use a smaller task size");
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n_tasks = pool.size() / task_size;
    std::vector<Task> tasks(n_tasks);
    std::vector<double> scores(task_size);
    for (std::size_t j = 0; j < n_tasks; ++j) {
        Task& task = tasks[j];
        task.id = j;
        task.members.assign(order.begin() + j * task_size, order.begin() + (j + 1) * task_size);
        for (std::size_t i = 0; i < task_size; ++i) scores[i] = pool[task.members[i]].difficulty;
        task.difficulty = wavelet::task_difficulty(scores);
    }
    return tasks;
}

std::vector<double> softmax_weights(std::span<const double> difficulties) {
    const std::size_t n = difficulties.size();
    if (n == 0) throw std::invalid_argument("no tasks to weight");
    double mean = 0.0;
    for (double s : difficulties) mean += s;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double s : difficulties) var += (s - mean) * (s - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);

    std::vector<double> z(n, 0.0);
    if (sd > 0.0) {
        for (std::size_t j = 0; j < n; ++j) z[j] = (difficulties[j] - mean) / sd;
    }
    const double z_max = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    std::vector<double> w(n);
    for (std::size_t j = 0; j < n; ++j) {
        w[j] = std::exp(z[j] - z_max);
        total += w[j];
    }
    const double scale = static_cast<double>(n) / total;
    for (double& x : w) x *= scale;
    return w;
}

std::vector<double> compute_weights(std::span<Task> tasks) {
    std::vector<double> scores;
    scores.reserve(tasks.size());
    for (const Task& t : tasks) {
        if (!std::isfinite(t.difficulty)) {
            throw std::invalid_argument("task " + std::to_string(t.id) + " has non-finite difficulty");
        }
        scores.push_back(t.difficulty);
    }
    std::vector<double> w = softmax_weights(scores);
    for (std::size_t j = 0; j < tasks.size(); ++j) tasks[j].weight = w[j];
    return w;
}

Terciles tercile_partition(std::span<const Task> tasks) {
    if (tasks.size() < 3) throw std::invalid_argument("tercile partition needs at least 3 tasks");
    std::vector<Task> sorted(tasks.begin(), tasks.end());
    std::sort(sorted.begin(), sorted.end(), [](const Task& a, const Task& b) {
        if (a.difficulty != b.difficulty) return a.difficulty < b.difficulty;
        return a.id < b.id;
    });
    const std::size_t n = sorted.size();
    const std::size_t base = n / 3;
    const std::size_t extra = n % 3;
    const std::size_t n_easy = base + (extra > 0 ? 1 : 0);
    const std::size_t n_medium = base + (extra > 1 ? 1 : 0);

    Terciles out;
    out.easy.assign(sorted.begin(), sorted.begin() + n_easy);
    out.medium.assign(sorted.begin() + n_easy, sorted.begin() + n_easy + n_medium);
    out.hard.assign(sorted.begin() + n_easy + n_medium, sorted.end());
    return out;
}

void write_task_manifest(const std::filesystem::path& path, std::span<const Task> tasks) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const Task& t : tasks) {
        nlohmann::ordered_json rec;
        rec["id"] = t.id;
        rec["size"] = t.members.size();
        rec["difficulty"] = t.difficulty;
        rec["weight"] = t.weight;
        out << rec.dump() << '\n';
    }
}

}  // namespace metastock
