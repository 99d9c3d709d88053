#include "powmon/vcd.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace powmon {

namespace {

// Reads whitespace-delimited tokens until "$end"; returns the joined body.
std::string read_until_end(std::istream& in, const std::string& directive) {
  std::string token, body;
  while (in >> token) {
    if (token == "$end") return body;
    if (!body.empty()) body += ' ';
    body += token;
  }
  throw std::runtime_error("vcd: unterminated " + directive);
}

double timescale_to_ns(const std::string& body) {
  // Accepts "1ns", "1 ns", "10 ps", ...
  std::string compact;
  for (char c : body)
    if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
  std::size_t pos = 0;
  while (pos < compact.size() && std::isdigit(static_cast<unsigned char>(compact[pos])))
    ++pos;
  if (pos == 0) throw std::runtime_error("vcd: malformed $timescale '" + body + "'");
  const double mag = std::stod(compact.substr(0, pos));
  const std::string unit = compact.substr(pos);
  double scale;
  if (unit == "s") scale = 1e9;
  else if (unit == "ms") scale = 1e6;
  else if (unit == "us") scale = 1e3;
  else if (unit == "ns") scale = 1.0;
  else if (unit == "ps") scale = 1e-3;
  else if (unit == "fs") scale = 1e-6;
  else throw std::runtime_error("vcd: unknown timescale unit '" + unit + "'");
  return mag * scale;
}

bool is_bit_char(char c) {
  return c == '0' || c == '1' || c == 'x' || c == 'X' || c == 'z' || c == 'Z';
}

char normalize_bit(char c) {
  if (c == 'X') return 'x';
  if (c == 'Z') return 'z';
  return c;
}

// width-extend a b-vector body (VCD left-extends with the leftmost char
// rule: '0' extends '0'/'1', x extends x, z extends z)
std::string extend_value(const std::string& bits, std::uint32_t width) {
  if (bits.size() >= width) return bits.substr(bits.size() - width);
  char fill = bits.empty() ? 'x' : bits.front();
  if (fill == '1') fill = '0';
  return std::string(width - bits.size(), fill) + bits;
}

}  // namespace

std::uint64_t VcdDocument::period_ticks() const {
  const double ratio = clock_period_ns / timescale_ns;
  const auto ticks = static_cast<std::uint64_t>(std::llround(ratio));
  if (ticks == 0 || std::abs(ratio - static_cast<double>(ticks)) > 1e-6)
    throw std::invalid_argument(
        "vcd: clock period must be a whole number of timescale ticks");
  return ticks;
}

std::uint64_t VcdDocument::trace_cycles() const {
  const std::uint64_t p = period_ticks();
  return (end_tick + p - 1) / p;
}

const VcdVariable& VcdDocument::variable_by_name(const std::string& name) const {
  for (const VcdVariable& v : variables)
    if (v.signal.name == name) return v;
  throw std::invalid_argument("vcd: unknown signal '" + name + "'");
}

VcdDocument parse_vcd(std::istream& in, double clock_period_ns) {
  VcdDocument doc;
  doc.clock_period_ns = clock_period_ns;

  std::map<std::string, std::uint32_t> by_code;
  bool definitions_done = false;
  bool saw_timescale = false;
  std::uint64_t now = 0;
  std::vector<std::string> current;  // per-variable current bits

  std::string token;
  while (in >> token) {
    if (token.empty()) continue;
    if (token[0] == '$') {
      const std::string directive = token;
      if (directive == "$timescale") {
        doc.timescale_ns = timescale_to_ns(read_until_end(in, directive));
        saw_timescale = true;
      } else if (directive == "$var") {
        if (definitions_done)
          throw std::runtime_error("vcd: $var after $enddefinitions");
        std::string type, width_s, code, name, tail;
        if (!(in >> type >> width_s >> code >> name))
          throw std::runtime_error("vcd: malformed $var");
        // optional bit-range token(s) before $end, e.g. "[7:0]"
        while (in >> tail && tail != "$end") {
          if (tail[0] != '[')
            throw std::runtime_error("vcd: malformed $var near '" + tail + "'");
        }
        std::uint32_t width = 0;
        try {
          width = static_cast<std::uint32_t>(std::stoul(width_s));
        } catch (...) {
          throw std::runtime_error("vcd: bad $var width '" + width_s + "'");
        }
        if (width == 0) throw std::runtime_error("vcd: zero-width $var");
        if (by_code.count(code))
          throw std::runtime_error("vcd: duplicate code '" + code + "'");
        const auto idx = static_cast<std::uint32_t>(doc.variables.size());
        by_code[code] = idx;
        doc.variables.push_back({{idx, name}, code, width});
      } else if (directive == "$enddefinitions") {
        read_until_end(in, directive);
        if (!saw_timescale)
          throw std::runtime_error("vcd: missing $timescale in header");
        definitions_done = true;
        current.assign(doc.variables.size(), "");
        for (std::size_t i = 0; i < doc.variables.size(); ++i)
          current[i] = std::string(doc.variables[i].width, 'x');
        doc.edge_ticks.assign(doc.variables.size(), {});
      } else if (directive == "$dumpvars" || directive == "$dumpall" ||
                 directive == "$dumpon" || directive == "$dumpoff") {
        // value changes inside these sections are handled by the main loop;
        // the closing $end token arrives as its own token and is skipped
        continue;
      } else if (directive == "$end") {
        continue;
      } else if (directive == "$scope" || directive == "$upscope" ||
                 directive == "$date" || directive == "$version" ||
                 directive == "$comment") {
        read_until_end(in, directive);
      } else {
        doc.warnings.push_back("skipped unsupported directive " + directive);
        read_until_end(in, directive);
      }
      continue;
    }

    if (token[0] == '#') {
      std::uint64_t t = 0;
      try {
        t = std::stoull(token.substr(1));
      } catch (...) {
        throw std::runtime_error("vcd: bad timestamp '" + token + "'");
      }
      if (t < now)
        throw std::runtime_error("vcd: timestamps must be non-decreasing");
      now = t;
      doc.end_tick = std::max(doc.end_tick, now);
      continue;
    }

    if (!definitions_done)
      throw std::runtime_error("vcd: value change before $enddefinitions");

    std::string code, bits;
    if (token[0] == 'b' || token[0] == 'B') {
      bits = token.substr(1);
      for (char& c : bits) {
        if (!is_bit_char(c))
          throw std::runtime_error("vcd: bad vector value '" + token + "'");
        c = normalize_bit(c);
      }
      if (!(in >> code))
        throw std::runtime_error("vcd: vector change missing identifier");
    } else if (token[0] == 'r' || token[0] == 'R') {
      // real-valued change: skip value + identifier
      if (!(in >> code)) throw std::runtime_error("vcd: dangling real change");
      doc.warnings.push_back("skipped real value change for '" + code + "'");
      continue;
    } else if (is_bit_char(token[0])) {
      bits = std::string(1, normalize_bit(token[0]));
      code = token.substr(1);
      if (code.empty())
        throw std::runtime_error("vcd: scalar change missing identifier");
    } else {
      throw std::runtime_error("vcd: unrecognized token '" + token + "'");
    }

    auto it = by_code.find(code);
    if (it == by_code.end())
      throw std::runtime_error("vcd: undeclared identifier code '" + code + "'");
    const std::uint32_t var = it->second;
    const std::string value = extend_value(bits, doc.variables[var].width);

    // per-bit positive edge detection against the previous value
    const std::string& prev = current[var];
    for (std::size_t b = 0; b < value.size(); ++b)
      if (prev[b] == '0' && value[b] == '1') doc.edge_ticks[var].push_back(now);
    current[var] = value;
    doc.changes.push_back({now, var, value});
    doc.end_tick = std::max(doc.end_tick, now);
  }

  if (!definitions_done)
    throw std::runtime_error("vcd: malformed header ($enddefinitions missing)");
  return doc;
}

VcdDocument parse_vcd_file(const std::string& path, double clock_period_ns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return parse_vcd(in, clock_period_ns);
}

std::uint64_t switching_count(const VcdDocument& doc, std::uint32_t var_index,
                              std::uint64_t t_cycle) {
  if (var_index >= doc.variables.size())
    throw std::invalid_argument("switching_count: unknown variable");
  const std::uint64_t limit_tick = t_cycle * doc.period_ticks();
  const auto& ticks = doc.edge_ticks[var_index];
  return static_cast<std::uint64_t>(
      std::lower_bound(ticks.begin(), ticks.end(), limit_tick) - ticks.begin());
}

std::uint64_t activity(const VcdDocument& doc, const SignalId& signal,
                       std::uint64_t t_start, std::uint64_t t_end) {
  if (t_start > t_end)
    throw std::invalid_argument("activity: t_start must be <= t_end");
  if (t_end > doc.trace_cycles())
    throw std::invalid_argument("activity: window extends past the trace");
  if (signal.index >= doc.variables.size() ||
      doc.variables[signal.index].signal.name != signal.name)
    throw std::invalid_argument("activity: unknown signal '" + signal.name + "'");
  return switching_count(doc, signal.index, t_end) -
         switching_count(doc, signal.index, t_start);
}

std::vector<SegmentBoundary> segment_by_state(const VcdDocument& doc,
                                              const SignalId& state_register) {
  const VcdVariable& reg = doc.variable_by_name(state_register.name);
  if (reg.width < 2)
    throw std::invalid_argument(
        "segment_by_state: state register must be a multi-bit variable");
  const std::uint64_t total = doc.trace_cycles();
  if (total == 0)
    throw std::invalid_argument("segment_by_state: empty trace");

  const std::uint64_t period = doc.period_ticks();
  auto decode = [&](const std::string& bits, std::uint64_t cycle) -> StateId {
    StateId v = 0;
    for (char c : bits) {
      if (c != '0' && c != '1')
        throw std::runtime_error(
            "segment_by_state: undecodable state value at cycle " +
            std::to_string(cycle));
      v = static_cast<StateId>((v << 1) | (c == '1' ? 1u : 0u));
    }
    return v;
  };

  // Walk the change list once; the register value during cycle c is the value
  // after all changes with tick <= c*period.
  std::vector<SegmentBoundary> out;
  std::string bits(reg.width, 'x');
  std::size_t pos = 0;
  bool open = false;
  StateId cur = 0;
  std::uint64_t entry = 0;
  for (std::uint64_t c = 0; c < total; ++c) {
    const std::uint64_t sample_tick = c * period;
    while (pos < doc.changes.size() && doc.changes[pos].tick <= sample_tick) {
      if (doc.changes[pos].var == reg.signal.index) bits = doc.changes[pos].value;
      ++pos;
    }
    const StateId s = decode(bits, c);
    if (!open) {
      open = true;
      cur = s;
      entry = c;
    } else if (s != cur) {
      out.push_back({cur, entry, c});
      cur = s;
      entry = c;
    }
  }
  out.push_back({cur, entry, total});
  return out;
}

PowerAnnotations load_power_jsonl(std::istream& in) {
  PowerAnnotations p;
  std::string line;
  std::map<std::uint64_t, std::uint32_t> by_segment;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row = nlohmann::json::parse(line);
    by_segment[row.at("segment").get<std::uint64_t>()] =
        row.at("power_uW").get<std::uint32_t>();
  }
  for (const auto& [seg, uw] : by_segment) {
    if (seg != p.power_uW.size())
      throw std::runtime_error("power jsonl: segment indices must be 0..n-1");
    p.power_uW.push_back(uw);
  }
  return p;
}

PowerAnnotations load_power_jsonl_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return load_power_jsonl(in);
}

void save_power_jsonl(const PowerAnnotations& p, std::ostream& out) {
  for (std::size_t i = 0; i < p.power_uW.size(); ++i) {
    nlohmann::json row;
    row["segment"] = i;
    row["power_uW"] = p.power_uW[i];
    out << row.dump() << '\n';
  }
}

Dataset build_dataset(const VcdDocument& doc,
                      const std::vector<std::string>& monitored,
                      const std::optional<std::string>& state_register,
                      std::optional<std::uint32_t> interval_cycles,
                      const PowerAnnotations& powers) {
  if (state_register.has_value() == interval_cycles.has_value())
    throw std::invalid_argument(
        "build_dataset: exactly one of state_register / interval_cycles");
  if (interval_cycles && *interval_cycles == 0)
    throw std::invalid_argument("build_dataset: interval_cycles must be >= 1");

  Dataset d;
  d.clock_period_ns = doc.clock_period_ns;
  std::vector<const VcdVariable*> vars;
  for (std::size_t i = 0; i < monitored.size(); ++i) {
    const VcdVariable& v = doc.variable_by_name(monitored[i]);
    vars.push_back(&v);
    d.signals.push_back({static_cast<std::uint32_t>(i), v.signal.name});
  }

  struct Window {
    std::uint64_t begin, end;
    std::optional<StateId> state;
  };
  std::vector<Window> windows;
  if (state_register) {
    d.mode = DatasetMode::kState;
    for (const SegmentBoundary& b :
         segment_by_state(doc, {0, *state_register}))
      windows.push_back({b.entry_cycle, b.exit_cycle, b.state});
  } else {
    d.mode = DatasetMode::kInterval;
    const std::uint64_t total = doc.trace_cycles();
    for (std::uint64_t begin = 0; begin + *interval_cycles <= total;
         begin += *interval_cycles)
      windows.push_back({begin, begin + *interval_cycles, std::nullopt});
  }

  if (powers.power_uW.size() < windows.size())
    throw std::invalid_argument(
        "build_dataset: missing power annotation for segment " +
        std::to_string(powers.power_uW.size()));

  for (std::size_t w = 0; w < windows.size(); ++w) {
    Sample s;
    s.cycles = static_cast<std::uint32_t>(windows[w].end - windows[w].begin);
    s.state = windows[w].state;
    s.power_uW = powers.power_uW[w];
    s.features.reserve(vars.size());
    for (const VcdVariable* v : vars) {
      const std::uint64_t count =
          switching_count(doc, v->signal.index, windows[w].end) -
          switching_count(doc, v->signal.index, windows[w].begin);
      if (count > kMaxFeatureValue)
        throw std::invalid_argument("build_dataset: segment " +
                                    std::to_string(w) + " exceeds " +
                                    std::to_string(kMaxFeatureValue) +
                                    " edges on signal '" + v->signal.name + "'");
      s.features.push_back(static_cast<std::uint32_t>(count));
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<std::pair<SignalId, std::uint64_t>> rank_signals_by_activity(
    const VcdDocument& doc) {
  if (doc.variables.empty())
    throw std::invalid_argument("rank_signals_by_activity: empty document");
  std::vector<std::pair<SignalId, std::uint64_t>> out;
  out.reserve(doc.variables.size());
  for (const VcdVariable& v : doc.variables)
    out.emplace_back(v.signal, doc.edge_ticks[v.signal.index].size());
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

}  // namespace powmon
