#include "ri3bp/manifolds.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>
#include <thread>

namespace ri3bp {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kTurnaround = -1e300;  // outcome marker: orbit fell back

// Forward (dir=+1) or backward (dir=-1) shot from (r, y, t).  Returns the
// 2BP-energy estimate at r_far, or kTurnaround if the orbit falls back
// (dir * y <= 0) or fails to reach r_far in the time guard.
double shoot_outcome(const Model& m, double r, double y, double t, int dir,
                     const SlopeSettings& ss) {
    Integrator ig(m, {r, y, t}, ss.integ, dir);
    // Generous multiple of the parabolic travel time to r_far.
    double s_max = 50.0 * std::pow(2.0 * ss.r_far, 1.5) / 6.0;
    while (ig.step(s_max)) {
        PolarState c = ig.current();
        if (c.r >= ss.r_far) return energy_twobody(m.G, c.r, c.y);
        if (dir * c.y <= 0) return kTurnaround;
    }
    return kTurnaround;  // ran out the guard: sub-parabolic
}

// Bisection (with Illinois acceleration once both ends escape) for the
// parabolic separatrix in w = dir * y on the fiber (r, t).
double slope_bisect(const Model& m, double r, double t, int dir, const SlopeSettings& ss) {
    if (r < 0.5 * m.G * m.G)
        throw Error(ErrorCode::NoBracket, "slope: r below the pericenter bound G^2/2");
    double wc = s0_slope(r, m.G);
    auto outcome = [&](double w) { return shoot_outcome(m, r, dir * w, t, dir, ss); };

    // Expand a bracket around the 2BP slope.
    double d = ss.bracket_init;
    double lo = 0, hi = 0, flo = 0, fhi = 0;
    bool found = false;
    while (d <= ss.bracket_max_rel * wc) {
        lo = wc - d;
        hi = wc + d;
        flo = outcome(lo);
        fhi = outcome(hi);
        if (flo < 0 && fhi > 0) { found = true; break; }
        d *= 4.0;
    }
    if (!found)
        throw Error(ErrorCode::NoBracket, "slope: no turnaround/escape straddle around dS0 at r=" +
                                              std::to_string(r));

    int it = 0;
    for (; it < ss.max_bisections; ++it) {
        if (hi - lo <= std::max(ss.tol, 4e-17 * wc)) break;
        double w;
        if (flo > kTurnaround * 0.5) {
            // Both ends reached r_far: false position (Illinois weights).
            w = (lo * fhi - hi * flo) / (fhi - flo);
            if (!(w > lo && w < hi)) w = 0.5 * (lo + hi);
        } else {
            w = 0.5 * (lo + hi);
        }
        double f = outcome(w);
        if (f < 0) {
            lo = w;
            flo = f;
        } else {
            hi = w;
            fhi = f;
        }
    }
    if (it >= ss.max_bisections)
        throw Error(ErrorCode::MaxBisections, "slope: bisection budget exhausted");

    // Parabolicity acceptance: the escaping end must sit inside the band.
    double band = ss.band_coeff * std::pow(ss.r_far, -1.5);
    if (!(std::abs(fhi) <= band))
        throw Error(ErrorCode::NonConverged, "slope: far-end energy outside the parabolicity band");
    return dir * 0.5 * (lo + hi);
}

double lagrange_eval(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    double acc = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double w = ys[i];
        for (std::size_t j = 0; j < xs.size(); ++j)
            if (j != i) w *= (x - xs[j]) / (xs[i] - xs[j]);
        acc += w;
    }
    return acc;
}

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGx[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                           -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                           0.7966664774136267,  0.9602898564975363};
constexpr double kGw[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                           0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                           0.2223810344533745, 0.1012285362903763};

}  // namespace

double stable_slope(const Model& m, double r, double t, const SlopeSettings& ss) {
    return slope_bisect(m, r, t, +1, ss);
}

double unstable_slope_direct(const Model& m, double r, double t, const SlopeSettings& ss) {
    return slope_bisect(m, r, t, -1, ss);
}

// ---------------------------------------------------------------------------
// GeneratingTable

GeneratingTable::GeneratingTable(double G, std::vector<double> r_grid, int nt,
                                 std::vector<double> values, int r_order)
    : G_(G), r_grid_(std::move(r_grid)), nt_(nt), r_order_(r_order), vals_(std::move(values)) {
    if (r_grid_.size() < static_cast<std::size_t>(r_order_) || nt_ < 2)
        throw Error(ErrorCode::InvalidArgument, "GeneratingTable: grid too small");
    if (vals_.size() != r_grid_.size() * static_cast<std::size_t>(nt_))
        throw Error(ErrorCode::InvalidArgument, "GeneratingTable: value count mismatch");
    lr_grid_.resize(r_grid_.size());
    for (std::size_t i = 0; i < r_grid_.size(); ++i) lr_grid_[i] = std::log(r_grid_[i]);
    s0_top_ = s0_generating(r_grid_.back(), G_).value;
}

namespace {
// Trigonometric interpolation weights on nt uniform nodes (even nt).
void trig_weights(int nt, double t, std::vector<double>& w) {
    w.resize(nt);
    for (int j = 0; j < nt; ++j) {
        double th = t - kTwoPi * j / nt;
        double s = std::sin(0.5 * th);
        if (std::abs(s) < 1e-12) {
            w[j] = 1.0;
        } else {
            w[j] = std::sin(0.5 * nt * th) * std::cos(0.5 * th) / (nt * s);
        }
    }
}
}  // namespace

double GeneratingTable::interp_r(const std::vector<double>& f, double r) const {
    if (!contains(r))
        throw Error(ErrorCode::BoundaryOutOfTable,
                    "table: r = " + std::to_string(r) + " outside [" + std::to_string(r_min()) +
                        ", " + std::to_string(r_max()) + "]");
    double lr = std::log(r);
    int nr = static_cast<int>(r_grid_.size());
    int i = static_cast<int>(std::upper_bound(lr_grid_.begin(), lr_grid_.end(), lr) -
                             lr_grid_.begin()) - 1;
    i = std::clamp(i, 0, nr - 2);
    int start = std::clamp(i - (r_order_ / 2 - 1), 0, nr - r_order_);
    std::vector<double> xs(lr_grid_.begin() + start, lr_grid_.begin() + start + r_order_);
    std::vector<double> ys(f.begin() + start, f.begin() + start + r_order_);
    return lagrange_eval(xs, ys, lr);
}

double GeneratingTable::integral_interp(const std::vector<double>& f, double a, double b) const {
    // Piecewise Gauss-Legendre, split at grid nodes for full interpolant order.
    double acc = 0;
    double x0 = a;
    for (std::size_t i = 0; i + 1 < r_grid_.size() && x0 < b; ++i) {
        if (r_grid_[i + 1] <= x0) continue;
        double x1 = std::min(b, r_grid_[i + 1]);
        double mid = 0.5 * (x0 + x1), half = 0.5 * (x1 - x0);
        for (int g = 0; g < 8; ++g) acc += half * kGw[g] * interp_r(f, mid + half * kGx[g]);
        x0 = x1;
    }
    return acc;
}

double GeneratingTable::stable(double r, double t) const {
    std::vector<double> w;
    trig_weights(nt_, t, w);
    int nr = static_cast<int>(r_grid_.size());
    std::vector<double> f(nr);
    for (int i = 0; i < nr; ++i) {
        double acc = 0;
        const double* row = &vals_[i * nt_];
        for (int j = 0; j < nt_; ++j) acc += row[j] * w[j];
        f[i] = acc;
    }
    return interp_r(f, r);
}

const GeneratingTable::PhaseCache& GeneratingTable::phase_cache(double t) const {
    double tm = std::fmod(t, kTwoPi);
    if (tm < 0) tm += kTwoPi;
    std::lock_guard<std::mutex> lk(cache_->mu);
    auto it = cache_->map.find(tm);
    if (it != cache_->map.end()) return it->second;
    PhaseCache pc;
    std::vector<double> w;
    trig_weights(nt_, tm, w);
    int nr = static_cast<int>(r_grid_.size());
    pc.vals.resize(nr);
    for (int i = 0; i < nr; ++i) {
        double acc = 0;
        const double* row = &vals_[i * nt_];
        for (int j = 0; j < nt_; ++j) acc += row[j] * w[j];
        pc.vals[i] = acc;
    }
    pc.cum.assign(nr, 0.0);
    for (int i = nr - 2; i >= 0; --i)
        pc.cum[i] = pc.cum[i + 1] + integral_interp(pc.vals, r_grid_[i], r_grid_[i + 1]);
    return cache_->map.emplace(tm, std::move(pc)).first->second;
}

double GeneratingTable::s_plus(double r, double t) const {
    const PhaseCache& pc = phase_cache(t);
    if (!contains(r))
        throw Error(ErrorCode::BoundaryOutOfTable, "s_plus: r outside table domain");
    int nr = static_cast<int>(r_grid_.size());
    int i = static_cast<int>(std::upper_bound(r_grid_.begin(), r_grid_.end(), r) -
                             r_grid_.begin()) - 1;
    i = std::clamp(i, 0, nr - 2);
    double tail = pc.cum[i + 1] + integral_interp(pc.vals, r, r_grid_[i + 1]);
    return s0_top_ - tail;
}

GeneratingTable build_table(const Model& m, const TableSpec& spec_in) {
    TableSpec spec = spec_in;
    if (spec.slope.r_far < 10.0 * spec.r_max) spec.slope.r_far = 10.0 * spec.r_max;
    if (spec.nr < spec.r_order || spec.nt < 2)
        throw Error(ErrorCode::InvalidArgument, "build_table: grid too small");

    std::vector<double> r_grid(spec.nr);
    double l0 = std::log(spec.r_min), l1 = std::log(spec.r_max);
    for (int i = 0; i < spec.nr; ++i)
        r_grid[i] = std::exp(l0 + (l1 - l0) * i / (spec.nr - 1));

    int nthreads = spec.threads > 0 ? spec.threads
                                    : std::max(1u, std::thread::hardware_concurrency());
    std::vector<double> vals;
    std::vector<double> kept_r;
    bool have_rows = false;
    for (int i = 0; i < spec.nr; ++i) {
        std::vector<double> row(spec.nt);
        bool row_failed = false;
        std::string fail_what;
        std::vector<std::future<void>> futs;
        std::atomic<int> next{0};
        std::mutex mu;
        auto worker = [&]() {
            for (;;) {
                int j = next.fetch_add(1);
                if (j >= spec.nt) return;
                double t = kTwoPi * j / spec.nt;
                try {
                    row[j] = stable_slope(m, r_grid[i], t, spec.slope);
                } catch (const Error& e) {
                    std::lock_guard<std::mutex> lk(mu);
                    row_failed = true;
                    fail_what = std::string(e.what()) + " at grid r=" + std::to_string(r_grid[i]) +
                                " t=" + std::to_string(t);
                }
            }
        };
        for (int k = 0; k < std::min(nthreads, spec.nt); ++k)
            futs.push_back(std::async(std::launch::async, worker));
        for (auto& f : futs) f.get();
        if (row_failed) {
            // Auto-shrink from the bottom while the graph domain is not yet
            // reached; a failure above valid rows is a real error.
            if (!have_rows) continue;
            throw Error(ErrorCode::NoBracket, "build_table: " + fail_what);
        }
        have_rows = true;
        kept_r.push_back(r_grid[i]);
        vals.insert(vals.end(), row.begin(), row.end());
    }
    if (kept_r.size() < static_cast<std::size_t>(spec.r_order))
        throw Error(ErrorCode::NoBracket, "build_table: graph domain too small for the grid");

    GeneratingTable table(m.G, kept_r, spec.nt, vals, spec.r_order);

    // Leave-one-out cross-validation along r at each phase node.
    double cv = 0;
    int nr = static_cast<int>(kept_r.size());
    for (int j = 0; j < spec.nt; ++j) {
        for (int i = 3; i < nr - 3; ++i) {
            std::vector<double> xs, ys;
            for (int k = i - 3; k <= i + 3; ++k) {
                if (k == i) continue;
                xs.push_back(std::log(kept_r[k]));
                ys.push_back(table.node_value(k, j));
            }
            double pred = lagrange_eval(xs, ys, std::log(kept_r[i]));
            cv = std::max(cv, std::abs(pred - table.node_value(i, j)));
        }
    }
    table.set_cross_validation_error(cv);
    return table;
}

// ---------------------------------------------------------------------------
// Splitting function

SplittingSample splitting_sample(const Model& m, const GeneratingTable& table, double launch_r,
                                 double R1, double R2, const SplittingSettings& ss) {
    SplittingSample out;
    out.launch_r = launch_r;
    double y0 = table.unstable(launch_r, 0.0);
    try {
        Integrator ig(m, {launch_r, y0, 0.0}, ss.integ, +1);
        for (int k = 1; k <= ss.max_crossings; ++k) {
            double sk = kTwoPi * k;
            while (ig.step(sk)) {}
            PolarState c = ig.current();
            if (c.y > 0) {
                if (c.r >= R1 && c.r <= R2) {
                    out.crossing = k;
                    out.cross_r = c.r;
                    out.delta = c.y - table.stable(c.r, 0.0);
                    out.returned = true;
                    return out;
                }
                if (c.r > R2) return out;  // jumped over the window: NO_RETURN
            }
        }
    } catch (const Error&) {
        // collision or step failure: NO_RETURN for this launch
    }
    return out;
}

SplittingCurve splitting_curve(const Model& m, const GeneratingTable& table, double R1, double R2,
                               int n_samples, const SplittingSettings& ss_in) {
    if (!(R1 < R2) || !table.contains(R1) || !table.contains(R2))
        throw Error(ErrorCode::InvalidArgument, "splitting_curve: window outside table domain");
    SplittingSettings ss = ss_in;
    SplittingCurve out;
    out.G = m.G;
    out.R1 = R1;
    out.R2 = R2;

    // Launch band: centered well above the window; its width is chosen so the
    // pericenter-passage phase wraps enough times to sweep the window.
    double lc = ss.launch_lo > 0 ? 0.5 * (ss.launch_lo + ss.launch_hi)
                                 : std::min(std::max(5.0 * R2, 50.0 + 0.0), 0.8 * table.r_max());
    lc = std::max(lc, 1.2 * R2);
    double slope_at = s0_slope(lc, m.G);
    double wraps = (R2 - R1) / (kTwoPi * s0_slope(R1, m.G)) + 2.0;
    double span = wraps * kTwoPi * slope_at;  // dr = |y| dt along the fall
    double lo = ss.launch_lo > 0 ? ss.launch_lo : lc - 0.5 * span;
    double hi = ss.launch_lo > 0 ? ss.launch_hi : lc + 0.5 * span;
    lo = std::max(lo, table.r_min());
    hi = std::min(hi, table.r_max());

    out.samples.resize(ss.n_launches);
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= ss.n_launches) return;
            double lr = lo + (hi - lo) * i / (ss.n_launches - 1);
            out.samples[i] = splitting_sample(m, table, lr, R1, R2, ss);
        }
    };
    unsigned nthreads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::future<void>> futs;
    for (unsigned k = 0; k < nthreads; ++k)
        futs.push_back(std::async(std::launch::async, worker));
    for (auto& f : futs) f.get();

    // Sign-change brackets between consecutive returned launches.  The curve
    // is piecewise smooth in launch_r with jumps where the crossing index
    // changes, so a raw sign change is refined by subdivision until both ends
    // sit on the same branch.
    for (int i = 0; i + 1 < ss.n_launches; ++i) {
        std::vector<std::pair<SplittingSample, SplittingSample>> work;
        {
            const auto& a = out.samples[i];
            const auto& b = out.samples[i + 1];
            if (a.returned && b.returned && a.delta * b.delta < 0) work.emplace_back(a, b);
        }
        int budget = 80;
        while (!work.empty() && budget > 0) {
            auto [a, b] = work.back();
            work.pop_back();
            if (a.crossing == b.crossing) {
                out.brackets.emplace_back(a.launch_r, b.launch_r);
                out.bracket_cross_r.emplace_back(a.cross_r, b.cross_r);
                continue;
            }
            if (b.launch_r - a.launch_r < 1e-9 * a.launch_r) continue;
            --budget;
            auto c = splitting_sample(m, table, 0.5 * (a.launch_r + b.launch_r), R1, R2, ss);
            if (!c.returned) continue;
            if (a.delta * c.delta < 0) work.emplace_back(a, c);
            if (c.delta * b.delta < 0) work.emplace_back(c, b);
        }
    }

    // Resample onto a uniform grid in cross_r (linear between raw samples).
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : out.samples)
        if (s.returned) pts.emplace_back(s.cross_r, s.delta);
    std::sort(pts.begin(), pts.end());
    out.grid_r.resize(n_samples);
    out.grid_delta.assign(n_samples, std::numeric_limits<double>::quiet_NaN());
    for (int j = 0; j < n_samples; ++j) {
        double r = R1 + (R2 - R1) * j / std::max(1, n_samples - 1);
        out.grid_r[j] = r;
        if (pts.empty()) continue;
        auto it = std::lower_bound(pts.begin(), pts.end(), std::make_pair(r, -1e300));
        if (it == pts.begin() || it == pts.end()) continue;
        auto p0 = *(it - 1), p1 = *it;
        if (p1.first - p0.first > 0 && p1.first - p0.first < 0.5 * (R2 - R1)) {
            double w = (r - p0.first) / (p1.first - p0.first);
            out.grid_delta[j] = (1 - w) * p0.second + w * p1.second;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization: one JSON header line, then CSV rows (r, then nt slopes).

std::string GeneratingTable::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"kind\":\"generating_table\",\"version\":1,\"G\":" << G_ << ",\"nr\":" << r_grid_.size()
       << ",\"nt\":" << nt_ << ",\"r_order\":" << r_order_ << ",\"cv_err\":" << cv_err_ << "}\n";
    os << "r";
    for (int j = 0; j < nt_; ++j) os << ",slope_t" << j;
    os << "\n";
    for (std::size_t i = 0; i < r_grid_.size(); ++i) {
        os << r_grid_[i];
        for (int j = 0; j < nt_; ++j) os << "," << vals_[i * nt_ + j];
        os << "\n";
    }
    return os.str();
}

GeneratingTable GeneratingTable::deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string header;
    std::getline(is, header);
    auto grab = [&](const std::string& key) -> double {
        auto p = header.find("\"" + key + "\":");
        if (p == std::string::npos)
            throw Error(ErrorCode::InvalidArgument, "table deserialize: missing " + key);
        return std::stod(header.substr(p + key.size() + 3));
    };
    double G = grab("G");
    int nr = static_cast<int>(grab("nr"));
    int nt = static_cast<int>(grab("nt"));
    int r_order = static_cast<int>(grab("r_order"));
    double cv = grab("cv_err");
    std::string line;
    std::getline(is, line);  // column header
    std::vector<double> r_grid, vals;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        r_grid.push_back(std::stod(cell));
        for (int j = 0; j < nt; ++j) {
            std::getline(ls, cell, ',');
            vals.push_back(std::stod(cell));
        }
    }
    if (static_cast<int>(r_grid.size()) != nr)
        throw Error(ErrorCode::InvalidArgument, "table deserialize: row count mismatch");
    GeneratingTable t(G, r_grid, nt, vals, r_order);
    t.set_cross_validation_error(cv);
    return t;
}

}  // namespace ri3bp
