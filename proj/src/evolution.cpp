#include "gnas/evolution.hpp"

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace gnas {

Strategy strategy_from_name(const std::string& name) {
  if (name == "re") return Strategy::kRegularizedEvolution;
  if (name == "rs") return Strategy::kRandomSearch;
  throw std::invalid_argument("unknown strategy '" + name + "' (expected re or rs)");
}

const char* strategy_name(Strategy s) {
  return s == Strategy::kRegularizedEvolution ? "re" : "rs";
}

Population::Population(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("Population: capacity must be positive");
}

void Population::insert(ArchitectureVector p, double reward) {
  members_.push_back({std::move(p), reward, next_age_++});
  if (members_.size() > capacity_) members_.pop_front();
}

const PopulationMember& Population::tournament(int sample_size, std::mt19937_64& rng) const {
  if (members_.empty()) throw std::logic_error("Population::tournament: empty population");
  if (sample_size < 1) throw std::invalid_argument("Population::tournament: sample size must be >= 1");
  std::uniform_int_distribution<std::size_t> pick(0, members_.size() - 1);
  const PopulationMember* best = nullptr;
  for (int s = 0; s < sample_size; ++s) {
    const PopulationMember& m = members_[pick(rng)];
    if (!best || m.reward > best->reward || (m.reward == best->reward && m.age < best->age)) best = &m;
  }
  return *best;
}

std::uint64_t eval_seed(std::uint64_t master_seed, std::uint64_t eval_index) {
  // splitmix64 over the (seed, index) stream
  std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL * (eval_index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

struct Job {
  ArchitectureVector p;
  std::uint64_t seed = 0;
  double t_submit = 0.0;
};

class WorkerPool {
 public:
  WorkerPool(int n_workers, const Evaluator& evaluator,
             std::chrono::steady_clock::time_point epoch)
      : evaluator_(evaluator), epoch_(epoch) {
    for (int i = 0; i < n_workers; ++i) threads_.emplace_back([this] { worker_loop(); });
  }

  ~WorkerPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_job_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void submit(Job job) {
    {
      std::lock_guard<std::mutex> lk(mu_);
      jobs_.push_back(std::move(job));
    }
    cv_job_.notify_one();
  }

  EvaluationRecord wait_completion() {
    std::unique_lock<std::mutex> lk(mu_);
    cv_done_.wait(lk, [this] { return !done_.empty(); });
    EvaluationRecord rec = std::move(done_.front());
    done_.pop_front();
    return rec;
  }

 private:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_).count();
  }

  void worker_loop() {
    for (;;) {
      Job job;
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_job_.wait(lk, [this] { return stop_ || !jobs_.empty(); });
        if (stop_ && jobs_.empty()) return;
        job = std::move(jobs_.front());
        jobs_.pop_front();
      }
      const double t_start = elapsed();
      EvaluationRecord rec;
      try {
        rec = evaluator_(job.p, job.seed);
      } catch (const std::exception&) {
        rec.p = job.p;
        rec.seed = job.seed;
        rec.failed = true;
        rec.reward = EvaluationRecord::worst_reward();
      }
      rec.t_submit = job.t_submit;
      rec.t_start = t_start;
      rec.t_finish = elapsed();
      {
        std::lock_guard<std::mutex> lk(mu_);
        done_.push_back(std::move(rec));
      }
      cv_done_.notify_one();
    }
  }

  const Evaluator& evaluator_;
  std::chrono::steady_clock::time_point epoch_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_job_, cv_done_;
  std::deque<Job> jobs_;
  std::deque<EvaluationRecord> done_;
  bool stop_ = false;
};

}  // namespace

std::vector<EvaluationRecord> run_search(const SearchConfig& cfg, const ChoiceTable& table,
                                         const Evaluator& evaluator) {
  if (cfg.workers < 1) throw std::invalid_argument("run_search: need at least one worker");
  if (cfg.sample_size < 1 || cfg.sample_size > cfg.population)
    throw std::invalid_argument("run_search: need 1 <= sample size <= population size");

  const auto epoch = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch).count();
  };

  std::mt19937_64 rng(cfg.seed);
  Population population(static_cast<std::size_t>(cfg.population));
  std::vector<EvaluationRecord> log;
  WorkerPool pool(cfg.workers, evaluator, epoch);

  std::uint64_t submitted = 0;
  std::uint64_t in_flight = 0;
  auto can_submit = [&] {
    if (cfg.max_evals > 0 && submitted >= cfg.max_evals) return false;
    return elapsed() < cfg.budget_s;
  };

  auto submit_next = [&] {
    ArchitectureVector p;
    // The first P submissions seed the population with uniform samples;
    // afterwards every submission is a mutation of a tournament winner.
    if (cfg.strategy == Strategy::kRandomSearch ||
        submitted < static_cast<std::uint64_t>(cfg.population) || population.size() == 0) {
      p = sample_uniform(table, rng);
    } else {
      p = mutate(population.tournament(cfg.sample_size, rng).p, table, rng);
    }
    pool.submit({std::move(p), eval_seed(cfg.seed, submitted), elapsed()});
    ++submitted;
    ++in_flight;
  };

  for (;;) {
    while (in_flight < static_cast<std::uint64_t>(cfg.workers) && can_submit()) submit_next();
    if (in_flight == 0) break;  // budget exhausted and drained
    EvaluationRecord rec = pool.wait_completion();
    --in_flight;
    population.insert(rec.p, rec.reward);
    log.push_back(std::move(rec));
  }
  return log;
}

std::vector<std::pair<double, double>> trajectory(const std::vector<EvaluationRecord>& log,
                                                  int window) {
  if (window < 1) throw std::invalid_argument("trajectory: window must be >= 1");
  std::vector<std::pair<double, double>> series;
  series.reserve(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - static_cast<std::size_t>(window) : 0;
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) sum += log[j].reward;
    series.emplace_back(log[i].t_finish, sum / static_cast<double>(i - lo + 1));
  }
  return series;
}

std::vector<std::pair<double, std::size_t>> count_high_performers(
    const std::vector<EvaluationRecord>& log, double threshold) {
  std::vector<std::pair<double, std::size_t>> series;
  series.reserve(log.size());
  std::set<std::vector<Index>> seen;
  for (const auto& rec : log) {
    if (rec.reward > threshold) seen.insert(rec.p.p);
    series.emplace_back(rec.t_finish, seen.size());
  }
  return series;
}

}  // namespace gnas
