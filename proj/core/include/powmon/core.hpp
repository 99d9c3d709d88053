#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace powmon {

// Hardware activity counters are 20 bits wide, so any feature value destined
// for the monitor must fit below this ceiling.
inline constexpr std::uint32_t kCounterWidthBits = 20;
inline constexpr std::uint32_t kMaxFeatureValue = (1u << kCounterWidthBits) - 1;

/// A monitored signal: ordinal position in the monitored list plus the
/// name it carried in the source trace.
struct SignalId {
  std::uint32_t index = 0;
  std::string name;

  friend bool operator==(const SignalId&, const SignalId&) = default;
};

/// Toggle counts per monitored signal over one segment or interval.
using FeatureVector = std::vector<std::uint32_t>;

/// Encoded FSM state register value.
using StateId = std::uint32_t;

enum class DatasetMode { kInterval, kState };

/// One training row: activity features, average dynamic power in microwatts,
/// the segment length in cycles, and (in state mode) the FSM state.
struct Sample {
  FeatureVector features;
  std::uint32_t power_uW = 0;
  std::uint32_t cycles = 1;
  std::optional<StateId> state;
};

struct Dataset {
  std::vector<SignalId> signals;
  std::vector<Sample> samples;
  DatasetMode mode = DatasetMode::kInterval;
  double clock_period_ns = 10.0;

  std::size_t feature_count() const { return signals.size(); }
  std::size_t size() const { return samples.size(); }
};

/// Throws std::invalid_argument describing the first violated invariant
/// (inconsistent feature lengths, missing state in state mode, ...).
void validate(const Dataset& d);

/// Deterministic shuffled split into (train, test). Train size is n*fraction
/// rounded half-up; the permutation depends only on `seed`.
std::pair<Dataset, Dataset> split_train_test(const Dataset& d,
                                             double train_fraction,
                                             std::uint64_t seed);

/// Mean absolute error as a percentage of the mean truth:
/// mean(|p - t|) / mean(t) * 100.
double mae_percent(const std::vector<double>& predictions,
                   const std::vector<double>& truths);

/// Keeps only the given feature columns (order given = new column order).
Dataset select_features(const Dataset& d,
                        const std::vector<std::uint32_t>& feature_indices);

// JSONL serialization. First line is a header object
//   {"signals":[...], "mode":"state"|"interval", "clock_period_ns":10.0}
// followed by one sample object per line with fixed field names
// `features`, `power_uW`, `cycles`, `state` (state omitted in interval mode).
void save_dataset_jsonl(const Dataset& d, std::ostream& out);
void save_dataset_jsonl(const Dataset& d, const std::string& path);
Dataset load_dataset_jsonl(std::istream& in);
Dataset load_dataset_jsonl_file(const std::string& path);

}  // namespace powmon
