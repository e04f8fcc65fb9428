#include "stpp/events.hpp"

#include "stpp/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace stpp::events {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

double parse_finite(std::string_view field, std::size_t line_no) {
    double value = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    if (!field.empty() && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty()) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": cannot parse number '" +
                                    std::string(field) + "'");
    }
    if (!std::isfinite(value)) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": non-finite value '" +
                                    std::string(field) + "'");
    }
    return value;
}

double population_variance(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) {
        acc += (x - mean) * (x - mean);
    }
    return acc / static_cast<double>(v.size());
}

}  // namespace

double TimeScale::apply(double t) const {
    const double span = max - min;
    return span > 0.0 ? (t - min) / span : 0.0;
}

double TimeScale::invert(double u) const {
    return min + u * (max - min);
}

std::vector<Event> parse_event_csv(std::istream& in, std::size_t d) {
    if (d == 0) {
        throw std::invalid_argument("space dimension must be positive");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("malformed header: empty input");
    }
    const auto header = split_fields(line);
    std::vector<std::string> expected{"t"};
    for (std::size_t k = 1; k <= d; ++k) {
        expected.push_back("x" + std::to_string(k));
    }
    expected.emplace_back("m");
    bool header_ok = header.size() == expected.size();
    for (std::size_t k = 0; header_ok && k < header.size(); ++k) {
        header_ok = header[k] == expected[k];
    }
    if (!header_ok) {
        std::string want = expected.front();
        for (std::size_t k = 1; k < expected.size(); ++k) {
            want += "," + expected[k];
        }
        throw std::invalid_argument("malformed header: expected '" + want + "', got '" +
                                    std::string(trim(line)) + "'");
    }

    std::vector<Event> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != d + 2) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": wrong column count " +
                                        std::to_string(fields.size()) + ", expected " +
                                        std::to_string(d + 2));
        }
        Event e;
        e.t = parse_finite(fields[0], line_no);
        e.x.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            e.x[k] = parse_finite(fields[k + 1], line_no);
        }
        e.m = parse_finite(fields[d + 1], line_no);
        if (!out.empty() && e.t < out.back().t) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": non-monotone time " +
                                        std::to_string(e.t) + " after " + std::to_string(out.back().t));
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<Event> parse_event_csv(std::string_view text, std::size_t d) {
    std::istringstream is{std::string(text)};
    return parse_event_csv(is, d);
}

void write_event_csv(std::ostream& out, const std::vector<Event>& events, std::size_t d) {
    out << 't';
    for (std::size_t k = 1; k <= d; ++k) {
        out << ",x" << k;
    }
    out << ",m\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& e : events) {
        if (e.x.size() != d) {
            throw std::invalid_argument("event dimension does not match d");
        }
        out << e.t;
        for (double v : e.x) {
            out << ',' << v;
        }
        out << ',' << e.m << '\n';
    }
}

std::vector<EventSequence> window_sequences(const std::vector<Event>& events,
                                            std::size_t seq_len,
                                            std::size_t overlap,
                                            std::size_t l_out) {
    if (seq_len <= overlap) {
        throw std::invalid_argument("seq_len must exceed overlap");
    }
    if (l_out == 0 || l_out >= seq_len) {
        throw std::invalid_argument("l_out must lie in [1, seq_len)");
    }
    if (events.size() < seq_len) {
        throw std::invalid_argument("fewer events (" + std::to_string(events.size()) +
                                    ") than seq_len (" + std::to_string(seq_len) + ")");
    }
    const std::size_t stride = seq_len - overlap;
    std::vector<EventSequence> out;
    out.reserve((events.size() - seq_len) / stride + 1);
    for (std::size_t start = 0; start + seq_len <= events.size(); start += stride) {
        EventSequence seq;
        seq.n_in = seq_len - l_out;
        seq.l_out = l_out;
        seq.t0 = events[start].t;
        seq.events.assign(events.begin() + static_cast<std::ptrdiff_t>(start),
                          events.begin() + static_cast<std::ptrdiff_t>(start + seq_len));
        for (auto& e : seq.events) {
            e.t -= seq.t0;
        }
        out.push_back(std::move(seq));
    }
    return out;
}

SequenceDataset split_dataset(std::vector<EventSequence> sequences,
                              const SplitFractions& fractions,
                              std::uint64_t seed) {
    const double total = fractions.train + fractions.val + fractions.test;
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("split fractions must sum to 1");
    }
    if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0) {
        throw std::invalid_argument("split fractions must be nonnegative");
    }
    const std::size_t n = sequences.size();
    if (n < 3) {
        throw std::invalid_argument("need at least 3 sequences to form nonempty splits, got " +
                                    std::to_string(n));
    }
    const std::size_t d = sequences.front().events.front().x.size();
    for (const auto& s : sequences) {
        if (s.n_in != sequences.front().n_in || s.l_out != sequences.front().l_out) {
            throw std::invalid_argument("sequences disagree on (n_in, l_out)");
        }
        for (const auto& e : s.events) {
            if (e.x.size() != d) {
                throw std::invalid_argument("sequences disagree on space dimension");
            }
        }
    }

    Rng rng(seed, 0x5e9);
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i + 1));
        std::swap(sequences[i], sequences[j]);
    }

    const auto alloc = [n](double f) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)));
    };
    const std::size_t n_val = alloc(fractions.val);
    const std::size_t n_test = alloc(fractions.test);
    if (n_val + n_test >= n) {
        throw std::invalid_argument("too few sequences for nonempty splits");
    }
    const std::size_t n_train = n - n_val - n_test;

    SequenceDataset ds;
    ds.d = d;
    auto it = std::make_move_iterator(sequences.begin());
    ds.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
    ds.val.assign(it + static_cast<std::ptrdiff_t>(n_train), it + static_cast<std::ptrdiff_t>(n_train + n_val));
    ds.test.assign(it + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(sequences.end()));
    ds.stats = compute_stats(ds.train, d);
    return ds;
}

NormStats compute_stats(const std::vector<EventSequence>& train, std::size_t d) {
    if (train.empty()) {
        throw std::invalid_argument("cannot compute statistics of an empty training split");
    }
    NormStats st;
    st.space_mean.assign(d, 0.0);
    st.space_var.assign(d, 0.0);
    std::vector<std::vector<double>> cols(d);
    std::vector<double> marks;
    double dt_max = 0.0;
    for (const auto& s : train) {
        for (std::size_t i = 0; i < s.events.size(); ++i) {
            const auto& e = s.events[i];
            for (std::size_t k = 0; k < d; ++k) {
                cols[k].push_back(e.x[k]);
            }
            marks.push_back(e.m);
            if (i > 0) {
                dt_max = std::max(dt_max, e.t - s.events[i - 1].t);
            }
        }
    }
    for (std::size_t k = 0; k < d; ++k) {
        st.space_mean[k] = std::accumulate(cols[k].begin(), cols[k].end(), 0.0) / static_cast<double>(cols[k].size());
        st.space_var[k] = population_variance(cols[k], st.space_mean[k]);
        if (!(st.space_var[k] > 0.0)) {
            throw std::invalid_argument("zero variance in location component x" + std::to_string(k + 1));
        }
    }
    st.marker_mean = std::accumulate(marks.begin(), marks.end(), 0.0) / static_cast<double>(marks.size());
    st.marker_var = population_variance(marks, st.marker_mean);
    if (!(st.marker_var > 0.0)) {
        // Constant markers (e.g. the all-ones pinwheel magnitude) are centred only.
        st.marker_var = 1.0;
    }
    if (!(dt_max > 0.0)) {
        throw std::invalid_argument("training intervals are all zero; dt_max undefined");
    }
    st.dt_max = dt_max;
    return st;
}

std::vector<double> normalize_location(const std::vector<double>& x, const NormStats& stats) {
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        out[k] = (x[k] - stats.space_mean[k]) / std::sqrt(stats.space_var[k]);
    }
    return out;
}

std::vector<double> denormalize_location(const std::vector<double>& x_norm, const NormStats& stats) {
    std::vector<double> out(x_norm.size());
    for (std::size_t k = 0; k < x_norm.size(); ++k) {
        if (!std::isfinite(x_norm[k])) {
            throw std::invalid_argument("non-finite normalized location");
        }
        out[k] = x_norm[k] * std::sqrt(stats.space_var[k]) + stats.space_mean[k];
    }
    return out;
}

double normalize_marker(double m, const NormStats& stats) {
    return (m - stats.marker_mean) / std::sqrt(stats.marker_var);
}

double denormalize_marker(double m_norm, const NormStats& stats) {
    return m_norm * std::sqrt(stats.marker_var) + stats.marker_mean;
}

double normalize_interval(double dt, const NormStats& stats) {
    return dt / stats.dt_max;
}

double denormalize_interval(double dt_norm, const NormStats& stats) {
    if (!std::isfinite(dt_norm)) {
        throw std::invalid_argument("non-finite normalized interval");
    }
    return dt_norm * stats.dt_max;
}

EventSequence normalize_sequence(const EventSequence& raw, const NormStats& stats) {
    if (raw.normalized) {
        throw std::invalid_argument("sequence is already normalized");
    }
    if (raw.events.size() != raw.n_in + raw.l_out) {
        throw std::invalid_argument("sequence length does not equal n_in + l_out");
    }
    EventSequence out = raw;
    out.normalized = true;
    const auto n = raw.n_in;
    const auto block_scale = [&](std::size_t lo, std::size_t hi) {
        TimeScale sc{raw.events[lo].t, raw.events[lo].t};
        for (std::size_t i = lo; i < hi; ++i) {
            sc.min = std::min(sc.min, raw.events[i].t);
            sc.max = std::max(sc.max, raw.events[i].t);
        }
        return sc;
    };
    out.in_scale = block_scale(0, n);
    out.out_scale = block_scale(n, raw.events.size());
    out.dt.assign(raw.events.size(), 0.0);
    for (std::size_t i = 0; i < raw.events.size(); ++i) {
        const auto& e = raw.events[i];
        auto& o = out.events[i];
        o.t = i < n ? out.in_scale.apply(e.t) : out.out_scale.apply(e.t);
        o.x = normalize_location(e.x, stats);
        o.m = normalize_marker(e.m, stats);
        if (i > 0) {
            out.dt[i] = normalize_interval(e.t - raw.events[i - 1].t, stats);
        }
    }
    return out;
}

SequenceDataset normalize(const SequenceDataset& raw) {
    SequenceDataset out;
    out.d = raw.d;
    out.stats = raw.stats.space_mean.empty() ? compute_stats(raw.train, raw.d) : raw.stats;
    const auto apply = [&](const std::vector<EventSequence>& src, std::vector<EventSequence>& dst) {
        dst.reserve(src.size());
        for (const auto& s : src) {
            dst.push_back(normalize_sequence(s, out.stats));
        }
    };
    apply(raw.train, out.train);
    apply(raw.val, out.val);
    apply(raw.test, out.test);
    return out;
}

EventSequence denormalize_sequence(const EventSequence& norm, const NormStats& stats) {
    if (!norm.normalized) {
        throw std::invalid_argument("sequence is not normalized");
    }
    EventSequence out = norm;
    out.normalized = false;
    out.dt.clear();
    for (std::size_t i = 0; i < norm.events.size(); ++i) {
        const auto& e = norm.events[i];
        auto& o = out.events[i];
        o.t = norm.t0 + (i < norm.n_in ? norm.in_scale.invert(e.t) : norm.out_scale.invert(e.t));
        o.x = denormalize_location(e.x, stats);
        o.m = denormalize_marker(e.m, stats);
    }
    out.in_scale = {};
    out.out_scale = {};
    return out;
}

std::vector<double> scaled_times(const EventSequence& norm) {
    if (!norm.normalized) {
        throw std::invalid_argument("scaled_times requires a normalized sequence");
    }
    std::vector<double> out(norm.dt.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < norm.dt.size(); ++i) {
        acc += norm.dt[i];
        out[i] = acc;
    }
    return out;
}

}  // namespace stpp::events
