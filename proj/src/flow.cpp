#include "frap/flow.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace frap {

namespace {

const char* kFlowHeader = "vehicle_id,entry_time,route";

[[noreturn]] void row_error(const std::string& source, std::size_t line, const std::string& what)
{
    throw std::runtime_error(source + ":" + std::to_string(line) + ": " + what);
}

long long parse_int(const std::string& s, const std::string& source, std::size_t line)
{
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        row_error(source, line, "expected integer, got '" + s + "'");
    }
    if (pos != s.size()) row_error(source, line, "expected integer, got '" + s + "'");
    return v;
}

double parse_double(const std::string& s, const std::string& source, std::size_t line)
{
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        row_error(source, line, "expected number, got '" + s + "'");
    }
    if (pos != s.size() || !std::isfinite(v)) row_error(source, line, "expected number, got '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Ring geometry of the 4-approach grid: approach a = side the vehicle comes from.
constexpr int kDRow[4] = {-1, 0, 1, 0};
constexpr int kDCol[4] = {0, 1, 0, -1};

}  // namespace

std::string format_real(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string format_exact(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

int FlowSchedule::max_intersections() const
{
    int n = 0;
    for (const FlowEvent& e : events)
        for (const RouteStep& s : e.route) n = std::max(n, s.intersection + 1);
    return n;
}

bool FlowSchedule::single_intersection() const { return max_intersections() <= 1; }

std::vector<double> FlowSchedule::movement_volumes(int intersection, int num_movements, double duration_s) const
{
    if (duration_s <= 0) throw std::invalid_argument("duration must be positive");
    std::vector<double> v(static_cast<std::size_t>(num_movements), 0);
    for (const FlowEvent& e : events) {
        if (e.route.empty() || e.route.front().intersection != intersection) continue;
        const int m = e.route.front().movement;
        if (m >= 0 && m < num_movements) v[static_cast<std::size_t>(m)] += 1;
    }
    for (double& x : v) x *= 3600.0 / duration_s;
    return v;
}

FlowSchedule parse_flow_csv(const std::string& path, int num_movements)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open flow file: " + path);
    return parse_flow_csv(in, path, num_movements);
}

FlowSchedule parse_flow_csv(std::istream& in, const std::string& source, int num_movements)
{
    std::string line;
    if (!std::getline(in, line)) row_error(source, 1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kFlowHeader) row_error(source, 1, "header must be '" + std::string(kFlowHeader) + "'");

    FlowSchedule flow;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cols = split(line, ',');
        if (cols.size() != 3) row_error(source, lineno, "expected 3 columns, got " + std::to_string(cols.size()));
        FlowEvent e;
        e.vehicle_id = parse_int(cols[0], source, lineno);
        e.entry_time = parse_double(cols[1], source, lineno);
        if (e.entry_time < 0) row_error(source, lineno, "negative entry time");
        if (cols[2].empty()) row_error(source, lineno, "empty route");
        for (const std::string& step : split(cols[2], ';')) {
            const auto parts = split(step, ':');
            if (parts.size() != 2) row_error(source, lineno, "route step must be intersection:movement, got '" + step + "'");
            RouteStep rs;
            rs.intersection = static_cast<int>(parse_int(parts[0], source, lineno));
            rs.movement = static_cast<int>(parse_int(parts[1], source, lineno));
            if (rs.intersection < 0) row_error(source, lineno, "negative intersection id");
            if (rs.movement < 0 || (num_movements > 0 && rs.movement >= num_movements))
                row_error(source, lineno, "unknown movement id " + parts[1]);
            e.route.push_back(rs);
        }
        flow.events.push_back(std::move(e));
    }
    std::stable_sort(flow.events.begin(), flow.events.end(),
                     [](const FlowEvent& a, const FlowEvent& b) { return a.entry_time < b.entry_time; });
    return flow;
}

void write_flow_csv(const std::string& path, const FlowSchedule& flow)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_flow_csv(out, flow);
}

void write_flow_csv(std::ostream& out, const FlowSchedule& flow)
{
    out << kFlowHeader << '\n';
    for (const FlowEvent& e : flow.events) {
        out << e.vehicle_id << ',' << format_exact(e.entry_time) << ',';
        for (std::size_t i = 0; i < e.route.size(); ++i) {
            if (i) out << ';';
            out << e.route[i].intersection << ':' << e.route[i].movement;
        }
        out << '\n';
    }
}

void FlowSynthesisSpec::validate(int num_movements) const
{
    if (!(duration > 0)) throw std::invalid_argument("flow duration must be positive");
    if (rows < 1 || cols < 1) throw std::invalid_argument("grid dimensions must be positive");
    auto check_rates = [&](const std::vector<double>& r) {
        if (static_cast<int>(r.size()) != num_movements)
            throw std::invalid_argument("expected " + std::to_string(num_movements) + " movement rates, got " +
                                        std::to_string(r.size()));
        for (double x : r)
            if (!(x >= 0) || !std::isfinite(x)) throw std::invalid_argument("movement rates must be finite and >= 0");
    };
    if (segments.empty()) {
        check_rates(rates);
        return;
    }
    double t = 0;
    for (const RateSegment& s : segments) {
        if (s.start != t || !(s.end > s.start)) throw std::invalid_argument("rate segments must tile [0, duration)");
        check_rates(s.rates);
        t = s.end;
    }
    if (t != duration) throw std::invalid_argument("rate segments must tile [0, duration)");
}

FlowSchedule synthesize_flow(const FlowSynthesisSpec& spec, std::uint64_t seed)
{
    const std::size_t m = spec.segments.empty() ? spec.rates.size() : spec.segments.front().rates.size();
    spec.validate(static_cast<int>(m));
    const bool grid = spec.rows * spec.cols > 1;
    if (grid && m != 8) throw std::invalid_argument("grid flows require the 4-approach movement layout");

    std::vector<RateSegment> segments = spec.segments;
    if (segments.empty()) segments.push_back(RateSegment{0, spec.duration, spec.rates});

    struct Stream {
        std::vector<RouteStep> route;
        std::size_t movement;
    };
    std::vector<Stream> streams;
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            const int k = r * spec.cols + c;
            for (std::size_t mv = 0; mv < m; ++mv) {
                if (!grid) {
                    streams.push_back({{RouteStep{k, static_cast<int>(mv)}}, mv});
                    continue;
                }
                const int approach = static_cast<int>(mv) / 2;
                const bool through = mv % 2 == 0;
                const int ur = r + kDRow[approach], uc = c + kDCol[approach];
                const bool boundary = ur < 0 || uc < 0 || ur >= spec.rows || uc >= spec.cols;
                if (!through) {
                    streams.push_back({{RouteStep{k, static_cast<int>(mv)}}, mv});
                } else if (boundary) {
                    Stream s{{}, mv};
                    int rr = r, cc = c;
                    while (rr >= 0 && cc >= 0 && rr < spec.rows && cc < spec.cols) {
                        s.route.push_back(RouteStep{rr * spec.cols + cc, static_cast<int>(mv)});
                        rr -= kDRow[approach];
                        cc -= kDCol[approach];
                    }
                    streams.push_back(std::move(s));
                }
            }
        }
    }

    std::mt19937_64 rng(seed);
    struct Pending {
        double t;
        std::size_t stream;
        std::size_t order;
    };
    std::vector<Pending> arrivals;
    for (std::size_t si = 0; si < streams.size(); ++si) {
        for (const RateSegment& seg : segments) {
            const double rate = seg.rates[streams[si].movement];
            if (rate <= 0) continue;
            if (spec.process == ArrivalProcess::Uniform) {
                const double gap = 3600.0 / rate;
                for (std::size_t k = 0;; ++k) {
                    const double t = seg.start + static_cast<double>(k) * gap;
                    if (t >= seg.end) break;
                    arrivals.push_back({t, si, arrivals.size()});
                }
            } else {
                std::exponential_distribution<double> gap(rate / 3600.0);
                for (double t = seg.start + gap(rng); t < seg.end; t += gap(rng)) arrivals.push_back({t, si, arrivals.size()});
            }
        }
    }
    std::stable_sort(arrivals.begin(), arrivals.end(), [](const Pending& a, const Pending& b) { return a.t < b.t; });

    FlowSchedule flow;
    flow.events.reserve(arrivals.size());
    for (const Pending& a : arrivals)
        flow.events.push_back(FlowEvent{static_cast<std::int64_t>(flow.events.size()), a.t, streams[a.stream].route});
    return flow;
}

}  // namespace frap
