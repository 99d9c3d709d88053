#include "powmon/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "powmon/util.hpp"

namespace powmon {

using nlohmann::json;

void validate(const Dataset& d) {
  const std::size_t n_feat = d.signals.size();
  for (std::size_t i = 0; i < d.signals.size(); ++i) {
    if (d.signals[i].name.empty())
      throw std::invalid_argument("dataset: signal " + std::to_string(i) +
                                  " has an empty name");
    if (d.signals[i].index != i)
      throw std::invalid_argument("dataset: signal index mismatch at position " +
                                  std::to_string(i));
  }
  if (!(d.clock_period_ns > 0.0))
    throw std::invalid_argument("dataset: clock_period_ns must be positive");
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const Sample& s = d.samples[i];
    if (s.features.size() != n_feat)
      throw std::invalid_argument("dataset: sample " + std::to_string(i) +
                                  " has feature length " +
                                  std::to_string(s.features.size()) +
                                  ", expected " + std::to_string(n_feat));
    if (s.cycles < 1)
      throw std::invalid_argument("dataset: sample " + std::to_string(i) +
                                  " has zero cycles");
    if (d.mode == DatasetMode::kState && !s.state.has_value())
      throw std::invalid_argument("dataset: sample " + std::to_string(i) +
                                  " lacks a state in state mode");
  }
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& d,
                                             double train_fraction,
                                             std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split_train_test: fraction must be in (0,1)");
  const std::size_t n = d.samples.size();
  if (n < 2)
    throw std::invalid_argument("split_train_test: need at least 2 samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_train = static_cast<std::size_t>(
      round_half_up(static_cast<double>(n) * train_fraction));
  n_train = std::min(std::max<std::size_t>(n_train, 1), n - 1);

  Dataset train{d.signals, {}, d.mode, d.clock_period_ns};
  Dataset test{d.signals, {}, d.mode, d.clock_period_ns};
  train.samples.reserve(n_train);
  test.samples.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : test).samples.push_back(d.samples[order[i]]);
  }
  return {std::move(train), std::move(test)};
}

double mae_percent(const std::vector<double>& predictions,
                   const std::vector<double>& truths) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("mae_percent: length mismatch");
  if (truths.empty()) throw std::invalid_argument("mae_percent: empty input");
  double abs_err = 0.0;
  double truth_sum = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    abs_err += std::abs(predictions[i] - truths[i]);
    truth_sum += truths[i];
  }
  const double truth_mean = truth_sum / static_cast<double>(truths.size());
  if (!(truth_mean > 0.0))
    throw std::invalid_argument("mae_percent: mean truth must be positive");
  const double mae = abs_err / static_cast<double>(truths.size());
  return mae / truth_mean * 100.0;
}

Dataset select_features(const Dataset& d,
                        const std::vector<std::uint32_t>& feature_indices) {
  Dataset out;
  out.mode = d.mode;
  out.clock_period_ns = d.clock_period_ns;
  out.signals.reserve(feature_indices.size());
  for (std::size_t k = 0; k < feature_indices.size(); ++k) {
    const std::uint32_t src = feature_indices[k];
    if (src >= d.signals.size())
      throw std::invalid_argument("select_features: index out of range: " +
                                  std::to_string(src));
    out.signals.push_back({static_cast<std::uint32_t>(k), d.signals[src].name});
  }
  out.samples.reserve(d.samples.size());
  for (const Sample& s : d.samples) {
    Sample r;
    r.power_uW = s.power_uW;
    r.cycles = s.cycles;
    r.state = s.state;
    r.features.reserve(feature_indices.size());
    for (std::uint32_t src : feature_indices) r.features.push_back(s.features[src]);
    out.samples.push_back(std::move(r));
  }
  return out;
}

void save_dataset_jsonl(const Dataset& d, std::ostream& out) {
  json header;
  json names = json::array();
  for (const SignalId& s : d.signals) names.push_back(s.name);
  header["signals"] = names;
  header["mode"] = d.mode == DatasetMode::kState ? "state" : "interval";
  header["clock_period_ns"] = d.clock_period_ns;
  out << header.dump() << '\n';
  for (const Sample& s : d.samples) {
    json row;
    row["features"] = s.features;
    row["power_uW"] = s.power_uW;
    row["cycles"] = s.cycles;
    if (s.state.has_value()) row["state"] = *s.state;
    out << row.dump() << '\n';
  }
}

void save_dataset_jsonl(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  save_dataset_jsonl(d, out);
}

Dataset load_dataset_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("dataset jsonl: missing header line");
  json header = json::parse(line);
  Dataset d;
  const std::string mode = header.at("mode").get<std::string>();
  if (mode == "state")
    d.mode = DatasetMode::kState;
  else if (mode == "interval")
    d.mode = DatasetMode::kInterval;
  else
    throw std::runtime_error("dataset jsonl: unknown mode '" + mode + "'");
  d.clock_period_ns = header.at("clock_period_ns").get<double>();
  std::uint32_t idx = 0;
  for (const auto& name : header.at("signals"))
    d.signals.push_back({idx++, name.get<std::string>()});

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json row = json::parse(line);
    Sample s;
    s.features = row.at("features").get<FeatureVector>();
    s.power_uW = row.at("power_uW").get<std::uint32_t>();
    s.cycles = row.at("cycles").get<std::uint32_t>();
    if (row.contains("state")) s.state = row.at("state").get<StateId>();
    d.samples.push_back(std::move(s));
  }
  validate(d);
  return d;
}

Dataset load_dataset_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return load_dataset_jsonl(in);
}

std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

static const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<std::uint8_t>& data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= data.size()) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out.push_back(kB64Alphabet[v & 63]);
    i += 3;
  }
  const std::size_t rem = data.size() - i;
  if (rem == 1) {
    std::uint32_t v = data[i] << 16;
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rem == 2) {
    std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(kB64Alphabet[(v >> 6) & 63]);
    out += "=";
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    int v = value_of(c);
    if (v < 0) throw std::runtime_error("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace powmon
