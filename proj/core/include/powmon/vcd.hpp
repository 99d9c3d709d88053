#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "powmon/core.hpp"

namespace powmon {

/// One value change taken from the dump: timestamp in timescale ticks, the
/// declared variable (by parse order) and the new value as a bit string
/// (MSB first, '0'/'1'/'x'/'z'), width-extended to the variable width.
struct VcdChange {
  std::uint64_t tick = 0;
  std::uint32_t var = 0;
  std::string value;
};

struct VcdVariable {
  SignalId signal;           // index = declaration order, name from $var
  std::string code;          // short identifier code
  std::uint32_t width = 1;
};

/// Parsed VCD subset: $timescale, $var (wires/regs, scalar or vector),
/// $enddefinitions, #timestamps, scalar and b-vector value changes.
/// Unsupported directives are skipped and recorded in `warnings`.
struct VcdDocument {
  double timescale_ns = 1.0;
  double clock_period_ns = 10.0;
  std::vector<VcdVariable> variables;
  std::vector<VcdChange> changes;       // time-ordered
  std::uint64_t end_tick = 0;           // latest timestamp seen
  std::vector<std::string> warnings;

  // positive-edge ticks per variable, built once at parse time
  std::vector<std::vector<std::uint64_t>> edge_ticks;

  std::uint64_t period_ticks() const;
  /// Total cycles covered by the trace: ceil(end_tick / period_ticks).
  std::uint64_t trace_cycles() const;
  const VcdVariable& variable_by_name(const std::string& name) const;
};

/// One maximal run of a constant state register value, in cycles.
struct SegmentBoundary {
  StateId state = 0;
  std::uint64_t entry_cycle = 0;
  std::uint64_t exit_cycle = 0;  // exclusive
};

VcdDocument parse_vcd(std::istream& in, double clock_period_ns = 10.0);
VcdDocument parse_vcd_file(const std::string& path, double clock_period_ns = 10.0);

/// Cumulative positive edges of `signal` from the start of the trace up to
/// (excluding) cycle `t_cycle`. Vector variables count per-bit 0->1 edges.
std::uint64_t switching_count(const VcdDocument& doc, std::uint32_t var_index,
                              std::uint64_t t_cycle);

/// Positive edges of `signal` inside the cycle window [t_start, t_end).
std::uint64_t activity(const VcdDocument& doc, const SignalId& signal,
                       std::uint64_t t_start, std::uint64_t t_end);

/// Run-length segmentation of the trace by the value of a multi-bit state
/// register. Boundaries tile [0, trace_cycles()) with no gaps. An x/z state
/// value anywhere in the trace is an error.
std::vector<SegmentBoundary> segment_by_state(const VcdDocument& doc,
                                              const SignalId& state_register);

/// Sidecar power annotations: power_uW[i] belongs to segment/window i.
struct PowerAnnotations {
  std::vector<std::uint32_t> power_uW;
};

PowerAnnotations load_power_jsonl(std::istream& in);
PowerAnnotations load_power_jsonl_file(const std::string& path);
void save_power_jsonl(const PowerAnnotations& p, std::ostream& out);

/// Builds a Dataset from the dump. Exactly one of state_register /
/// interval_cycles must be given: state mode emits one sample per state
/// segment, interval mode one sample per full window of `interval_cycles`.
Dataset build_dataset(const VcdDocument& doc,
                      const std::vector<std::string>& monitored,
                      const std::optional<std::string>& state_register,
                      std::optional<std::uint32_t> interval_cycles,
                      const PowerAnnotations& powers);

/// All variables ordered by total positive edges, descending; ties keep
/// declaration order.
std::vector<std::pair<SignalId, std::uint64_t>> rank_signals_by_activity(
    const VcdDocument& doc);

}  // namespace powmon
