#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sdeadapt/rng.hpp"

namespace sdeadapt {

/// One lazily sampled Brownian path. Values already drawn are pinned; a query
/// at a new time is drawn from the exact conditional law given every pinned
/// sample (forward Gaussian extension past the end, Brownian bridge between
/// neighbours). Draws are keyed by the query time, so a path is replayable
/// from (seed, path index) alone and refining queries never perturb samples
/// that other consumers already saw.
///
/// Storage exploits the monotone query phases of scheme runs: a forward
/// reference run appends to the "spine"; interior refinements append to an
/// "active" sorted layer that is merged into a single sorted overlay whenever
/// a query arrives out of order. Everything is flat arrays, 16 bytes per
/// sample, no per-node allocation.
class BrownianPath {
public:
    BrownianPath(std::uint64_t master_seed, std::uint64_t path_index,
                 std::size_t reserve_hint = 0)
        : gauss_(master_seed, path_index) {
        if (reserve_hint > 0) spine_.reserve(reserve_hint);
        spine_.emplace_back(0.0, 0.0);
    }

    double sample_at(double t) {
        if (!(t >= 0.0))
            throw std::invalid_argument("BrownianPath: query time must be >= 0");
        // Fast paths: monotone forward queries and re-reads of the newest
        // sample. Overlay samples always sit strictly inside the spine, so t
        // past the spine end is a fresh time.
        const auto& back = spine_.back();
        if (t > back.first) return extend(t, back.second);
        if (t == back.first) return back.second;

        const Sample* hit = nullptr;
        const Sample *left = nullptr, *right = nullptr;
        locate(spine_, t, hit, left, right);
        if (hit) return hit->second;
        locate(merged_, t, hit, left, right);
        if (hit) return hit->second;
        locate(active_, t, hit, left, right);
        if (hit) return hit->second;

        // left is bounded below by spine_[0] = (0,0); right by the spine end.
        const double lt = left->first, lv = left->second;
        const double rt = right->first, rv = right->second;
        const double frac = (t - lt) / (rt - lt);
        const double mean = lv + frac * (rv - lv);
        const double var = (rt - t) * frac;
        const double w = mean + std::sqrt(var) * gauss_.normal_at(t);

        if (!active_.empty() && t < active_.back().first) fold_active();
        active_.emplace_back(t, w);
        return w;
    }

    /// W_t - W_s, both endpoints sampled (s first).
    double increment(double s, double t) {
        if (s > t) throw std::invalid_argument("BrownianPath: increment needs s <= t");
        if (s == t) return 0.0;
        const double ws = sample_at(s);
        return sample_at(t) - ws;
    }

    double t_max() const noexcept { return spine_.back().first; }
    std::size_t sample_count() const noexcept {
        return spine_.size() + merged_.size() + active_.size();
    }

    /// Re-key to a fresh path, keeping all buffer capacity. Lets a worker
    /// recycle one large allocation across many Monte Carlo paths.
    void reset(std::uint64_t master_seed, std::uint64_t path_index) {
        gauss_ = GaussianStream(master_seed, path_index);
        spine_.clear();
        spine_.emplace_back(0.0, 0.0);
        merged_.clear();
        active_.clear();
    }

    /// Binary dump: u64 count, then (f64 time, f64 value) pairs sorted by
    /// time, all little-endian.
    void dump(std::ostream& os) const {
        std::vector<Sample> all = sorted_samples();
        write_le(os, static_cast<std::uint64_t>(all.size()));
        for (const auto& s : all) {
            write_le(os, std::bit_cast<std::uint64_t>(s.first));
            write_le(os, std::bit_cast<std::uint64_t>(s.second));
        }
    }

    static BrownianPath restore(std::istream& is, std::uint64_t master_seed = 0,
                                std::uint64_t path_index = 0) {
        BrownianPath path(master_seed, path_index);
        const std::uint64_t n = read_le(is);
        path.spine_.clear();
        path.spine_.reserve(n);
        double prev = -1.0;
        for (std::uint64_t i = 0; i < n; ++i) {
            const double t = std::bit_cast<double>(read_le(is));
            const double w = std::bit_cast<double>(read_le(is));
            if (!is) throw std::runtime_error("BrownianPath::restore: truncated stream");
            if (t <= prev) throw std::runtime_error("BrownianPath::restore: times not sorted");
            prev = t;
            path.spine_.emplace_back(t, w);
        }
        if (path.spine_.empty() || path.spine_.front().first != 0.0 ||
            path.spine_.front().second != 0.0)
            throw std::runtime_error("BrownianPath::restore: missing (0,0) origin");
        return path;
    }

private:
    using Sample = std::pair<double, double>;

    double extend(double t, double w_last) {
        const double w =
            w_last + std::sqrt(t - spine_.back().first) * gauss_.normal_at(t);
        spine_.emplace_back(t, w);
        return w;
    }

    // Tighten (hit, left, right) with the neighbours of t in one sorted tier.
    static void locate(const std::vector<Sample>& v, double t, const Sample*& hit,
                       const Sample*& left, const Sample*& right) {
        if (hit || v.empty()) return;
        auto it = std::lower_bound(
            v.begin(), v.end(), t,
            [](const Sample& s, double x) { return s.first < x; });
        if (it != v.end()) {
            if (it->first == t) {
                hit = &*it;
                return;
            }
            if (!right || it->first < right->first) right = &*it;
        }
        if (it != v.begin()) {
            const Sample* cand = &*std::prev(it);
            if (!left || cand->first > left->first) left = cand;
        }
    }

    void fold_active() {
        scratch_.clear();
        scratch_.reserve(merged_.size() + active_.size());
        std::merge(merged_.begin(), merged_.end(), active_.begin(), active_.end(),
                   std::back_inserter(scratch_),
                   [](const Sample& a, const Sample& b) { return a.first < b.first; });
        merged_.swap(scratch_); // buffers alternate, capacity is recycled
        active_.clear();
    }

    static void write_le(std::ostream& os, std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        os.write(reinterpret_cast<const char*>(b), 8);
    }
    static std::uint64_t read_le(std::istream& is) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    std::vector<Sample> sorted_samples() const {
        std::vector<Sample> tmp, all;
        tmp.reserve(merged_.size() + active_.size());
        std::merge(merged_.begin(), merged_.end(), active_.begin(), active_.end(),
                   std::back_inserter(tmp),
                   [](const Sample& a, const Sample& b) { return a.first < b.first; });
        all.reserve(tmp.size() + spine_.size());
        std::merge(spine_.begin(), spine_.end(), tmp.begin(), tmp.end(),
                   std::back_inserter(all),
                   [](const Sample& a, const Sample& b) { return a.first < b.first; });
        return all;
    }

    GaussianStream gauss_;
    std::vector<Sample> spine_;   // strictly increasing, starts at (0,0)
    std::vector<Sample> merged_;  // folded interior refinements, sorted
    std::vector<Sample> active_;  // current monotone refinement phase
    std::vector<Sample> scratch_;
};

} // namespace sdeadapt
