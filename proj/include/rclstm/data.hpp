#pragma once

// Ingestion and preprocessing: log10 + min-max normalization for traffic,
// one-hot location encoding for mobility, sliding windows and the single
// chronological train/test cut.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rclstm/error.hpp"
#include "rclstm/io.hpp"
#include "rclstm/linalg.hpp"
#include "rclstm/task.hpp"

namespace rclstm {

/// Ordered observations. Traffic series fill `values`; mobility series fill
/// `location_ids`. Timestamps are seconds since the Unix epoch.
struct TimeSeries {
    std::vector<std::int64_t> timestamps;
    Vector values;
    std::vector<std::string> location_ids;

    std::size_t size() const noexcept { return timestamps.size(); }
};

struct NormalizationParams {
    double min_log = 0.0;
    double max_log = 1.0;

    friend bool operator==(const NormalizationParams&, const NormalizationParams&) = default;
};

// -- normalization --------------------------------------------------------------

inline NormalizationParams fit_normalization(std::span<const double> values)
{
    if (values.empty()) throw DataError("normalize: empty series");
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double v = values[k];
        if (!(v > 0.0) || !std::isfinite(v))
            throw DataError("normalize: value at index " + std::to_string(k) + " is not positive (" + std::to_string(v) +
                            "); log10 requires positive traffic");
        const double x = std::log10(v);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (!(hi > lo)) throw DataError("normalize: degenerate range (constant series)");
    return {lo, hi};
}

inline Vector apply_normalization(std::span<const double> values, const NormalizationParams& p)
{
    Vector out(values.size());
    const double span = p.max_log - p.min_log;
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (!(values[k] > 0.0)) throw DataError("normalize: non-positive value at index " + std::to_string(k));
        out[k] = (std::log10(values[k]) - p.min_log) / span;
    }
    return out;
}

struct NormalizedSeries {
    Vector values;
    NormalizationParams params;
};

/// x = log10(v); out = (x - min x) / (max x - min x).
inline NormalizedSeries log_minmax_normalize(std::span<const double> values)
{
    auto p = fit_normalization(values);
    return {apply_normalization(values, p), p};
}

inline double denormalize(double v, const NormalizationParams& p) noexcept
{
    return std::pow(10.0, v * (p.max_log - p.min_log) + p.min_log);
}

// -- location codebook ----------------------------------------------------------

/// Bijection between raw location IDs and indices 1..m, numbered in order of
/// first appearance.
class LocationCodebook {
public:
    LocationCodebook() = default;

    static LocationCodebook build(const std::vector<std::string>& ids)
    {
        LocationCodebook book;
        for (const auto& id : ids) book.add(id);
        return book;
    }

    std::size_t add(const std::string& id)
    {
        auto [it, inserted] = index_.emplace(id, ids_.size() + 1);
        if (inserted) ids_.push_back(id);
        return it->second;
    }

    std::size_t size() const noexcept { return ids_.size(); }

    std::size_t index_of(const std::string& id) const
    {
        auto it = index_.find(id);
        if (it == index_.end()) throw DataError("unknown location id '" + id + "' (not in training codebook)");
        return it->second;
    }

    const std::string& id_of(std::size_t index) const
    {
        if (index < 1 || index > ids_.size()) throw DataError("location index " + std::to_string(index) + " out of range");
        return ids_[index - 1];
    }

    const std::vector<std::string>& ids() const noexcept { return ids_; }

    friend bool operator==(const LocationCodebook& a, const LocationCodebook& b) { return a.ids_ == b.ids_; }

private:
    std::vector<std::string> ids_;
    std::map<std::string, std::size_t> index_;
};

inline Vector one_hot(std::size_t index, std::size_t m)
{
    if (index < 1 || index > m) throw DataError("one_hot: index " + std::to_string(index) + " outside 1.." + std::to_string(m));
    Vector v(m, 0.0);
    v[index - 1] = 1.0;
    return v;
}

inline Vector one_hot_encode(const std::string& id, const LocationCodebook& book)
{
    return one_hot(book.index_of(id), book.size());
}

/// Inverse of one_hot_encode: the id at the arg-max position.
inline const std::string& one_hot_decode(std::span<const double> v, const LocationCodebook& book)
{
    const auto k = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    return book.id_of(k + 1);
}

// -- windows and splits ---------------------------------------------------------

/// Supervised (window, next-step target) pairs. Each input is a flattened
/// window of `window` rows by `feature_dim` features. Regression targets go
/// in `targets`; classification targets are 1-based classes in `labels`.
struct WindowedDataset {
    Task task = Task::regression;
    std::size_t window = 0;
    std::size_t feature_dim = 1;
    std::vector<Vector> inputs;
    Vector targets;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return inputs.size(); }

    /// Last observed feature row of sample k (the naive forecast input).
    std::span<const double> last_row(std::size_t k) const noexcept
    {
        return std::span<const double>(inputs[k]).subspan((window - 1) * feature_dim, feature_dim);
    }

    WindowedDataset slice(std::size_t begin, std::size_t end) const
    {
        WindowedDataset out{task, window, feature_dim, {}, {}, {}};
        out.inputs.assign(inputs.begin() + static_cast<std::ptrdiff_t>(begin),
                          inputs.begin() + static_cast<std::ptrdiff_t>(end));
        if (!targets.empty())
            out.targets.assign(targets.begin() + static_cast<std::ptrdiff_t>(begin),
                               targets.begin() + static_cast<std::ptrdiff_t>(end));
        if (!labels.empty())
            out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                              labels.begin() + static_cast<std::ptrdiff_t>(end));
        return out;
    }

    friend bool operator==(const WindowedDataset&, const WindowedDataset&) = default;
};

namespace detail {
inline void require_enough(std::size_t n, std::size_t window)
{
    if (window < 1) throw DataError("sliding_window: window length must be >= 1");
    if (n <= window)
        throw DataError("insufficient data: series of length " + std::to_string(n) + " needs more than " +
                        std::to_string(window) + " points for one window");
}
}  // namespace detail

/// Sample k has window = elements k..k+T-1 and target = element k+T.
inline WindowedDataset sliding_window(std::span<const double> series, std::size_t window)
{
    detail::require_enough(series.size(), window);
    WindowedDataset ds{Task::regression, window, 1, {}, {}, {}};
    const std::size_t n = series.size() - window;
    ds.inputs.reserve(n);
    ds.targets.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        ds.inputs.emplace_back(series.begin() + static_cast<std::ptrdiff_t>(k),
                               series.begin() + static_cast<std::ptrdiff_t>(k + window));
        ds.targets.push_back(series[k + window]);
    }
    return ds;
}

/// One-hot windows over 1-based classes 1..m; targets are the next class.
inline WindowedDataset sliding_window_classes(std::span<const std::size_t> classes, std::size_t m, std::size_t window)
{
    detail::require_enough(classes.size(), window);
    WindowedDataset ds{Task::classification, window, m, {}, {}, {}};
    const std::size_t n = classes.size() - window;
    ds.inputs.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Vector flat(window * m, 0.0);
        for (std::size_t t = 0; t < window; ++t) {
            const std::size_t c = classes[k + t];
            if (c < 1 || c > m) throw DataError("sliding_window: class " + std::to_string(c) + " outside 1..m");
            flat[t * m + (c - 1)] = 1.0;
        }
        ds.inputs.push_back(std::move(flat));
        ds.labels.push_back(classes[k + window]);
    }
    return ds;
}

struct Split {
    WindowedDataset train;
    WindowedDataset test;
};

/// First floor(fraction * N) samples train, the rest test.
inline Split chronological_split(const WindowedDataset& ds, double train_fraction)
{
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw DomainError("chronological_split: train fraction must lie in (0,1)");
    const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(ds.size())));
    if (cut == 0 || cut >= ds.size())
        throw DataError("chronological_split: fraction " + std::to_string(train_fraction) + " of " +
                        std::to_string(ds.size()) + " samples leaves an empty side");
    return {ds.slice(0, cut), ds.slice(cut, ds.size())};
}

// -- CSV loaders ----------------------------------------------------------------

/// Parses "YYYY-MM-DD[T ]HH:MM[:SS][Z]" (also a bare date) to epoch seconds.
inline std::optional<std::int64_t> parse_iso8601(const std::string& s)
{
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char sep = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec);
    if (n < 3) return std::nullopt;
    if (n >= 4 && sep != 'T' && sep != ' ') return std::nullopt;
    if (n == 4 || n == 5) return std::nullopt;
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60) return std::nullopt;
    return sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600LL + mi * 60LL + sec;
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

struct CsvRows {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

inline CsvRows read_csv(std::istream& in, const std::vector<std::string>& header, const std::string& source)
{
    CsvRows out;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            if (fields != header) {
                std::string expected;
                for (std::size_t k = 0; k < header.size(); ++k) expected += (k ? "," : "") + header[k];
                throw DataError(source + ":" + std::to_string(lineno) + ": expected header '" + expected + "'");
            }
            have_header = true;
            continue;
        }
        if (fields.size() != header.size())
            throw DataError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                            " fields, got " + std::to_string(fields.size()));
        for (const auto& f : fields)
            if (f.empty()) throw DataError(source + ":" + std::to_string(lineno) + ": empty field");
        out.rows.push_back(std::move(fields));
        out.line_numbers.push_back(lineno);
    }
    if (!have_header) throw DataError(source + ": missing header");
    return out;
}

inline std::int64_t parse_timestamp_field(const std::string& f, const std::string& source, std::size_t lineno)
{
    auto ts = parse_iso8601(f);
    if (!ts) throw DataError(source + ":" + std::to_string(lineno) + ": bad timestamp '" + f + "'");
    return *ts;
}

inline double parse_double_field(const std::string& f, const std::string& source, std::size_t lineno)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(f, &used);
        if (used != f.size() || !std::isfinite(v)) throw std::invalid_argument(f);
        return v;
    } catch (const std::exception&) {
        throw DataError(source + ":" + std::to_string(lineno) + ": bad number '" + f + "'");
    }
}

/// Sorts by timestamp (warning if needed) and rejects duplicates.
inline void order_series(TimeSeries& s, const std::string& source, std::ostream* warn)
{
    std::vector<std::size_t> perm(s.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (!std::is_sorted(s.timestamps.begin(), s.timestamps.end())) {
        if (warn) *warn << "warning: " << source << ": timestamps not in order; sorting\n";
        std::stable_sort(perm.begin(), perm.end(),
                         [&](std::size_t a, std::size_t b) { return s.timestamps[a] < s.timestamps[b]; });
        TimeSeries sorted;
        for (auto k : perm) {
            sorted.timestamps.push_back(s.timestamps[k]);
            if (!s.values.empty()) sorted.values.push_back(s.values[k]);
            if (!s.location_ids.empty()) sorted.location_ids.push_back(s.location_ids[k]);
        }
        s = std::move(sorted);
    }
    for (std::size_t k = 1; k < s.size(); ++k)
        if (s.timestamps[k] == s.timestamps[k - 1])
            throw DataError(source + ": duplicate timestamp at sorted position " + std::to_string(k));
}
}  // namespace detail

/// Traffic CSV: header `timestamp,kbps`.
inline TimeSeries load_traffic_csv(std::istream& in, const std::string& source = "<traffic>",
                                   std::ostream* warn = &std::cerr)
{
    auto csv = detail::read_csv(in, {"timestamp", "kbps"}, source);
    TimeSeries s;
    for (std::size_t k = 0; k < csv.rows.size(); ++k) {
        const auto ln = csv.line_numbers[k];
        s.timestamps.push_back(detail::parse_timestamp_field(csv.rows[k][0], source, ln));
        s.values.push_back(detail::parse_double_field(csv.rows[k][1], source, ln));
    }
    detail::order_series(s, source, warn);
    return s;
}

inline TimeSeries load_traffic_csv(const std::string& path, std::ostream* warn = &std::cerr)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return load_traffic_csv(in, path, warn);
}

/// Mobility CSV: header `datetime,latitude,longitude,location_id`. Only the
/// datetime and location ID are retained.
inline TimeSeries load_mobility_csv(std::istream& in, const std::string& source = "<mobility>",
                                    std::ostream* warn = &std::cerr)
{
    auto csv = detail::read_csv(in, {"datetime", "latitude", "longitude", "location_id"}, source);
    TimeSeries s;
    for (std::size_t k = 0; k < csv.rows.size(); ++k) {
        const auto ln = csv.line_numbers[k];
        s.timestamps.push_back(detail::parse_timestamp_field(csv.rows[k][0], source, ln));
        detail::parse_double_field(csv.rows[k][1], source, ln);
        detail::parse_double_field(csv.rows[k][2], source, ln);
        s.location_ids.push_back(csv.rows[k][3]);
    }
    detail::order_series(s, source, warn);
    return s;
}

inline TimeSeries load_mobility_csv(const std::string& path, std::ostream* warn = &std::cerr)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return load_mobility_csv(in, path, warn);
}

// -- preprocessing pipelines ----------------------------------------------------

enum class NormalizationScope : std::uint8_t {
    full_series = 0,  // statistics over the whole series, then window and split
    train_only = 1,   // statistics over the training prefix only
};

/// A windowed, split-ready dataset with everything needed to map
/// predictions back to raw units.
struct PreparedDataset {
    WindowedDataset samples;
    double train_fraction = 0.9;
    NormalizationParams norm;  // regression only
    LocationCodebook codebook;  // classification only

    Split split() const { return chronological_split(samples, train_fraction); }
    std::size_t train_size() const
    {
        return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(samples.size())));
    }

    friend bool operator==(const PreparedDataset&, const PreparedDataset&) = default;
};

/// log10 + min-max, window, (split later). With train_only scope the
/// statistics come from the observations that precede the first test target.
inline PreparedDataset prepare_traffic(std::span<const double> raw, std::size_t window, double train_fraction,
                                       NormalizationScope scope = NormalizationScope::full_series)
{
    detail::require_enough(raw.size(), window);
    NormalizationParams p;
    if (scope == NormalizationScope::full_series) {
        p = fit_normalization(raw);
    } else {
        const std::size_t n_samples = raw.size() - window;
        const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_samples)));
        p = fit_normalization(raw.first(cut + window));
    }
    const Vector norm = apply_normalization(raw, p);
    PreparedDataset out{sliding_window(norm, window), train_fraction, p, {}};
    out.split();  // validates the fraction early
    return out;
}

/// Codebook from the training prefix; an unseen id in the test part is an error.
inline PreparedDataset prepare_mobility(const std::vector<std::string>& ids, std::size_t window, double train_fraction)
{
    detail::require_enough(ids.size(), window);
    const std::size_t n_samples = ids.size() - window;
    const auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_samples)));
    if (cut == 0 || cut >= n_samples) throw DataError("prepare_mobility: split leaves an empty side");
    // training windows and targets cover observations [0, cut + window)
    LocationCodebook book;
    for (std::size_t k = 0; k < cut + window; ++k) book.add(ids[k]);
    std::vector<std::size_t> classes;
    classes.reserve(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        try {
            classes.push_back(book.index_of(ids[k]));
        } catch (const DataError&) {
            throw DataError("location id '" + ids[k] + "' at position " + std::to_string(k) +
                            " appears only after the training cut");
        }
    }
    return {sliding_window_classes(classes, book.size(), window), train_fraction, {}, std::move(book)};
}

// -- dataset cache container ----------------------------------------------------

inline constexpr char kDatasetMagic[] = "RCLDSET1";
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::vector<std::uint8_t> save_dataset(const PreparedDataset& d)
{
    io::Writer w;
    w.header(std::string_view(kDatasetMagic, 8), kDatasetVersion);
    const auto& s = d.samples;
    w.u8(static_cast<std::uint8_t>(s.task));
    w.u64(s.window);
    w.u64(s.feature_dim);
    w.f64(d.train_fraction);
    w.f64(d.norm.min_log);
    w.f64(d.norm.max_log);
    w.u64(d.codebook.size());
    for (const auto& id : d.codebook.ids()) w.str(id);
    w.u64(s.size());
    for (const auto& in : s.inputs) w.bytes(in.data(), in.size() * sizeof(double));
    if (s.task == Task::regression) {
        w.bytes(s.targets.data(), s.targets.size() * sizeof(double));
    } else {
        for (auto c : s.labels) w.u64(c);
    }
    return w.take();
}

inline PreparedDataset load_dataset(std::span<const std::uint8_t> bytes)
{
    io::Reader r(bytes);
    r.expect_header(std::string_view(kDatasetMagic, 8), kDatasetVersion);
    PreparedDataset d;
    auto& s = d.samples;
    const auto task = r.u8();
    if (task > 1) throw FormatError("corrupt stream: bad task tag");
    s.task = static_cast<Task>(task);
    s.window = static_cast<std::size_t>(r.u64());
    s.feature_dim = static_cast<std::size_t>(r.u64());
    d.train_fraction = r.f64();
    d.norm.min_log = r.f64();
    d.norm.max_log = r.f64();
    const auto m = r.count(8);
    for (std::size_t k = 0; k < m; ++k) d.codebook.add(r.str());
    const auto n = r.count(1);
    const std::size_t row = s.window * s.feature_dim;
    if (row == 0 || row > (1u << 28)) throw FormatError("corrupt stream: bad window shape");
    for (std::size_t k = 0; k < n; ++k) {
        Vector in(row);
        r.bytes(in.data(), row * sizeof(double));
        s.inputs.push_back(std::move(in));
    }
    if (s.task == Task::regression) {
        s.targets.resize(n);
        r.bytes(s.targets.data(), n * sizeof(double));
    } else {
        for (std::size_t k = 0; k < n; ++k) s.labels.push_back(static_cast<std::size_t>(r.u64()));
    }
    r.expect_end();
    return d;
}

}  // namespace rclstm
