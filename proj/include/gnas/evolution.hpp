#ifndef GNAS_EVOLUTION_HPP
#define GNAS_EVOLUTION_HPP

#include "gnas/search_space.hpp"
#include "gnas/trainer.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gnas {

enum class Strategy { kRegularizedEvolution, kRandomSearch };

Strategy strategy_from_name(const std::string& name);
const char* strategy_name(Strategy s);

struct SearchConfig {
  int population = 100;
  int sample_size = 10;
  int workers = 1;
  double budget_s = 3600.0;
  std::uint64_t max_evals = 0;  // 0 = wall-clock limit only
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kRegularizedEvolution;

  bool operator==(const SearchConfig&) const = default;
};

struct PopulationMember {
  ArchitectureVector p;
  double reward = 0.0;
  std::uint64_t age = 0;  // insertion order
};

// Aging-evolution population: fixed capacity, inserting past capacity evicts
// the single oldest member.
class Population {
 public:
  explicit Population(std::size_t capacity);
  void insert(ArchitectureVector p, double reward);
  std::size_t size() const { return members_.size(); }
  std::size_t capacity() const { return capacity_; }
  const PopulationMember& operator[](std::size_t i) const { return members_[i]; }

  // S uniform draws with replacement; the winner is the max reward, ties
  // broken toward the oldest member.
  const PopulationMember& tournament(int sample_size, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<PopulationMember> members_;
  std::uint64_t next_age_ = 0;
};

// Deterministic per-evaluation seed stream.
std::uint64_t eval_seed(std::uint64_t master_seed, std::uint64_t eval_index);

using Evaluator = std::function<EvaluationRecord(const ArchitectureVector&, std::uint64_t seed)>;

// Asynchronous controller over a pool of cfg.workers evaluation threads.
// Returns every finished evaluation in completion order. With one worker the
// whole run is reproducible from cfg.seed (timestamps aside).
std::vector<EvaluationRecord> run_search(const SearchConfig& cfg, const ChoiceTable& table,
                                         const Evaluator& evaluator);

// Running average of the last `window` rewards, timestamped at each finish.
std::vector<std::pair<double, double>> trajectory(const std::vector<EvaluationRecord>& log,
                                                  int window = 100);

// Cumulative count of unique architectures with reward strictly above the
// threshold, one point per evaluation.
std::vector<std::pair<double, std::size_t>> count_high_performers(
    const std::vector<EvaluationRecord>& log, double threshold);

}  // namespace gnas

#endif  // GNAS_EVOLUTION_HPP
