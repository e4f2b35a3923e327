#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rclstm/data.hpp"
#include "rclstm/random.hpp"

using namespace rclstm;

TEST(Normalization, PowersOfTen)
{
    auto r = log_minmax_normalize(Vector{10, 100, 1000});
    ASSERT_EQ(r.values.size(), 3u);
    EXPECT_NEAR(r.values[0], 0.0, 1e-15);
    EXPECT_NEAR(r.values[1], 0.5, 1e-15);
    EXPECT_NEAR(r.values[2], 1.0, 1e-15);
    EXPECT_NEAR(r.params.min_log, 1.0, 1e-15);
    EXPECT_NEAR(r.params.max_log, 3.0, 1e-15);
}

TEST(Normalization, ExtremesMonotoneAndRoundTrip)
{
    Rng rng(1);
    Vector raw(500);
    for (auto& v : raw) v = std::pow(10.0, rng.uniform(-2, 6));
    auto r = log_minmax_normalize(raw);
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    EXPECT_EQ(r.values[static_cast<std::size_t>(lo - raw.begin())], 0.0);
    EXPECT_EQ(r.values[static_cast<std::size_t>(hi - raw.begin())], 1.0);
    for (std::size_t a = 0; a < raw.size(); ++a) {
        EXPECT_GE(r.values[a], 0.0);
        EXPECT_LE(r.values[a], 1.0);
        EXPECT_NEAR(denormalize(r.values[a], r.params), raw[a], 1e-9 * raw[a]);
        const std::size_t b = (a * 7 + 3) % raw.size();
        if (raw[a] < raw[b]) {
            EXPECT_LE(r.values[a], r.values[b]);
        }
    }
}

TEST(Normalization, DenormalizeEndpoints)
{
    const NormalizationParams p{1.0, 3.0};
    EXPECT_NEAR(denormalize(0.0, p), 10.0, 1e-12);
    EXPECT_NEAR(denormalize(1.0, p), 1000.0, 1e-9);
    EXPECT_NEAR(denormalize(0.5, p), 100.0, 1e-10);
}

TEST(Normalization, Errors)
{
    EXPECT_THROW(log_minmax_normalize(Vector{1, 0, 3}), DataError);
    EXPECT_THROW(log_minmax_normalize(Vector{1, -2, 3}), DataError);
    EXPECT_THROW(log_minmax_normalize(Vector{5, 5, 5}), DataError);
}

TEST(OneHot, Encoding)
{
    auto one = LocationCodebook::build({"A"});
    EXPECT_EQ(one_hot_encode("A", one), (Vector{1}));
    auto book = LocationCodebook::build({"x", "y", "z", "y"});
    EXPECT_EQ(book.size(), 3u);
    EXPECT_EQ(book.index_of("y"), 2u);
    EXPECT_EQ(one_hot_encode("y", book), (Vector{0, 1, 0}));
    EXPECT_THROW(one_hot_encode("q", book), DataError);
}

TEST(OneHot, RoundTripRandomCodebook)
{
    Rng rng(2);
    std::vector<std::string> ids;
    for (int k = 0; k < 200; ++k) ids.push_back("loc" + std::to_string(rng.index(60)));
    auto book = LocationCodebook::build(ids);
    for (const auto& id : ids) EXPECT_EQ(one_hot_decode(one_hot_encode(id, book), book), id);
    for (std::size_t k = 1; k <= book.size(); ++k) EXPECT_EQ(book.index_of(book.id_of(k)), k);
}

TEST(SlidingWindow, EnumeratedCase)
{
    auto ds = sliding_window(Vector{10, 11, 12, 13, 14}, 2);
    ASSERT_EQ(ds.size(), 3u);
    EXPECT_EQ(ds.inputs[0], (Vector{10, 11}));
    EXPECT_EQ(ds.targets[0], 12.0);
    EXPECT_EQ(ds.inputs[2], (Vector{12, 13}));
    EXPECT_EQ(ds.targets[2], 14.0);
    EXPECT_EQ(ds.last_row(1)[0], 12.0);
}

TEST(SlidingWindow, Boundaries)
{
    EXPECT_EQ(sliding_window(Vector{1, 2, 3, 4}, 3).size(), 1u);
    EXPECT_THROW(sliding_window(Vector{1, 2, 3}, 3), DataError);
    EXPECT_THROW(sliding_window(Vector{1, 2, 3}, 0), DataError);
}

TEST(SlidingWindow, CountAndTargetPropertyOverRandomShapes)
{
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t t = 1 + rng.index(20);
        const std::size_t n = t + 1 + rng.index(50);
        Vector s(n);
        for (std::size_t k = 0; k < n; ++k) s[k] = static_cast<double>(k);
        auto ds = sliding_window(s, t);
        ASSERT_EQ(ds.size(), n - t);
        for (std::size_t k = 0; k < ds.size(); ++k) {
            ASSERT_EQ(ds.inputs[k].size(), t);
            ASSERT_EQ(ds.inputs[k].front(), static_cast<double>(k));
            ASSERT_EQ(ds.targets[k], static_cast<double>(k + t));
        }
    }
}

TEST(SlidingWindow, Classes)
{
    const std::vector<std::size_t> cls{1, 3, 2, 2};
    auto ds = sliding_window_classes(cls, 3, 2);
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.inputs[0], (Vector{1, 0, 0, 0, 0, 1}));
    EXPECT_EQ(ds.labels, (std::vector<std::size_t>{2, 2}));
    EXPECT_THROW(sliding_window_classes(std::vector<std::size_t>{1, 4, 2}, 3, 1), DataError);
}

TEST(ChronologicalSplit, Sizes)
{
    Vector s(11);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = static_cast<double>(k);
    auto sp = chronological_split(sliding_window(s, 1), 0.9);
    EXPECT_EQ(sp.train.size(), 9u);
    EXPECT_EQ(sp.test.size(), 1u);

    Vector s100(101);
    for (std::size_t k = 0; k < s100.size(); ++k) s100[k] = static_cast<double>(k);
    auto ds = sliding_window(s100, 1);
    auto sp2 = chronological_split(ds, 0.6);
    EXPECT_EQ(sp2.train.size(), 60u);
    EXPECT_EQ(sp2.test.size(), 40u);
    // order preserved, disjoint, covers everything
    EXPECT_EQ(sp2.train.targets.back() + 1.0, sp2.test.targets.front());
    Vector all = sp2.train.targets;
    all.insert(all.end(), sp2.test.targets.begin(), sp2.test.targets.end());
    EXPECT_EQ(all, ds.targets);
}

TEST(ChronologicalSplit, Errors)
{
    auto ds = sliding_window(Vector{1, 2, 3, 4}, 1);
    EXPECT_THROW(chronological_split(ds, 0.0), DomainError);
    EXPECT_THROW(chronological_split(ds, 1.0), DomainError);
    EXPECT_THROW(chronological_split(ds, 0.2), DataError);
}

TEST(Iso8601, Parses)
{
    EXPECT_EQ(parse_iso8601("1970-01-01T00:00:00"), std::int64_t{0});
    EXPECT_EQ(parse_iso8601("2005-01-01 00:15:00"), std::int64_t{1104538500});
    EXPECT_FALSE(parse_iso8601("2005-13-01T00:00:00").has_value());
    EXPECT_FALSE(parse_iso8601("yesterday").has_value());
}

TEST(CsvLoaders, TrafficTwoRows)
{
    std::istringstream in("timestamp,kbps\n2005-01-01T00:00:00,120.5\n2005-01-01T00:15:00,99\n");
    auto s = load_traffic_csv(in);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.values, (Vector{120.5, 99}));
    EXPECT_EQ(s.timestamps[1] - s.timestamps[0], 900);
}

TEST(CsvLoaders, MalformedRowNamesLine)
{
    std::istringstream in("timestamp,kbps\n2005-01-01T00:00:00,1\n2005-01-01T00:15:00,abc\n");
    try {
        load_traffic_csv(in, "t.csv");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("t.csv:3:"), std::string::npos) << e.what();
    }
    std::istringstream empty("timestamp,kbps\n2005-01-01T00:00:00,\n");
    EXPECT_THROW(load_traffic_csv(empty), DataError);
    std::istringstream header("time,kbps\n2005-01-01T00:00:00,1\n");
    EXPECT_THROW(load_traffic_csv(header), DataError);
}

TEST(CsvLoaders, UnsortedIsSortedWithWarningDuplicateRejected)
{
    std::istringstream in("timestamp,kbps\n2005-01-01T00:15:00,2\n2005-01-01T00:00:00,1\n");
    std::ostringstream warn;
    auto s = load_traffic_csv(in, "u.csv", &warn);
    EXPECT_EQ(s.values, (Vector{1, 2}));
    EXPECT_NE(warn.str().find("sorting"), std::string::npos);
    std::istringstream dup("timestamp,kbps\n2005-01-01T00:00:00,2\n2005-01-01T00:00:00,1\n");
    EXPECT_THROW(load_traffic_csv(dup, "d.csv", nullptr), DataError);
}

TEST(CsvLoaders, MobilityKeepsDatetimeAndId)
{
    std::istringstream in("datetime,latitude,longitude,location_id\n"
                          "2010-03-01T08:00:00,39.9,116.3,L7\n"
                          "2010-03-01T09:00:00,39.8,116.4,L2\n");
    auto s = load_mobility_csv(in);
    EXPECT_EQ(s.location_ids, (std::vector<std::string>{"L7", "L2"}));
    EXPECT_TRUE(s.values.empty());
}

TEST(CsvLoaders, FullSizeTrafficFile)
{
    const std::string path = ::testing::TempDir() + "rclstm_traffic_10772.csv";
    {
        std::FILE* f = std::fopen(path.c_str(), "w");
        ASSERT_NE(f, nullptr);
        std::fputs("timestamp,kbps\n", f);
        for (int k = 0; k < 10772; ++k) {
            const int minutes = 15 * k;
            std::fprintf(f, "2005-%02d-%02dT%02d:%02d:00,%d\n", 1 + minutes / (60 * 24 * 28), 1 + (minutes / (60 * 24)) % 28,
                         (minutes / 60) % 24, minutes % 60, 1000 + k % 97);
        }
        std::fclose(f);
    }
    auto s = load_traffic_csv(path, nullptr);
    EXPECT_EQ(s.size(), 10772u);
    std::remove(path.c_str());
    EXPECT_THROW(load_traffic_csv(path, nullptr), DataError);
}

TEST(Prepare, TrafficScopes)
{
    Vector raw(40);
    for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = 10.0 + static_cast<double>(k);
    auto full = prepare_traffic(raw, 5, 0.5);
    EXPECT_EQ(full.samples.size(), 35u);
    EXPECT_EQ(full.norm.max_log, std::log10(49.0));
    auto train_only = prepare_traffic(raw, 5, 0.5, NormalizationScope::train_only);
    // 17 training samples use observations 0..21
    EXPECT_EQ(train_only.norm.max_log, std::log10(31.0));
    EXPECT_GT(train_only.split().test.targets.back(), 1.0);
}

TEST(Prepare, MobilityCodebookFromTrainingOnly)
{
    std::vector<std::string> ids{"a", "b", "a", "c", "b", "a", "c", "b", "a", "b"};
    auto d = prepare_mobility(ids, 2, 0.5);
    EXPECT_EQ(d.codebook.size(), 3u);
    EXPECT_EQ(d.samples.feature_dim, 3u);
    ids.back() = "zzz";
    EXPECT_THROW(prepare_mobility(ids, 2, 0.5), DataError);
}

TEST(DatasetCache, RoundTrip)
{
    Vector raw(30);
    for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = 5.0 + std::sin(static_cast<double>(k)) * 3.0;
    auto d = prepare_traffic(raw, 4, 0.8);
    auto bytes = save_dataset(d);
    EXPECT_EQ(load_dataset(bytes), d);
    auto m = prepare_mobility({"a", "b", "a", "c", "b", "a", "c", "b"}, 2, 0.7);
    EXPECT_EQ(load_dataset(save_dataset(m)), m);
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(load_dataset(bytes), FormatError);
}
