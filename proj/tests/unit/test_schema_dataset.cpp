#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "mrt/dataset_io.hpp"
#include "mrt/errors.hpp"
#include "mrt/pipeline.hpp"
#include "mrt/preprocess.hpp"
#include "mrt/synthetic.hpp"
#include "mrt/timeutil.hpp"
#include "mrt/verification.hpp"
#include "test_util.hpp"

using namespace mrt;

namespace {

Schema one_channel_schema() {
    Schema s;
    s.key = {"store"};
    s.group_key = {"store"};
    s.variables = {{"sales", VarKind::numerical, 0, VarScope::specific, VarGroup::observed}};
    s.validate();
    return s;
}

RawSeries series_of(const Schema& schema, const std::string& id, const std::vector<double>& values,
                    const std::string& store = "a") {
    RawSeries s = make_series(schema, id, values.size());
    s.attributes["store"] = store;
    for (std::size_t t = 0; t < values.size(); ++t) {
        s.timestamps[t] = static_cast<Instant>(t) * 1800;
        s.obs(t, 0) = values[t];
    }
    return s;
}

std::vector<std::string> numbered_keys(std::size_t n) {
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < n; ++i) keys.push_back(std::to_string(n - i));  // unsorted on purpose
    return keys;
}

std::size_t count_part(const SplitAssignment& a, SplitPart p) {
    return static_cast<std::size_t>(std::count(a.part.begin(), a.part.end(), p));
}

}  // namespace

TEST_CASE("timestamps parse and format") {
    CHECK(parse_iso8601("1970-01-01T00:30") == 1800);
    CHECK(parse_iso8601("2021-03-04 10:14:00Z") == parse_iso8601("2021-03-04T10:14:00"));
    CHECK(format_iso8601(parse_iso8601("2021-03-04T10:00:00")) == "2021-03-04T10:00:00Z");
    CHECK_THROWS(parse_iso8601("yesterday"));
}

TEST_CASE("quantise: one aggregation spread evenly over its periods") {
    const auto schema = one_channel_schema();
    auto raw = series_of(schema, "s", {6.0});
    raw.end_time = 3 * 1800;
    auto q = quantise_series(raw, 1800);
    REQUIRE(q.length() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
        CHECK(q.obs(t, 0) == 2.0);
        CHECK(q.timestamps[t] == static_cast<Instant>(t) * 1800);
    }

    auto half = series_of(schema, "h", {5.0});
    half.end_time = 2 * 1800;
    auto qh = quantise_series(half, 1800);
    REQUIRE(qh.length() == 2);
    CHECK(qh.obs(0, 0) == 2.5);
    CHECK(qh.obs(1, 0) == 2.5);
}

TEST_CASE("quantise: boundaries snap to the nearest period mark") {
    const auto schema = one_channel_schema();
    auto raw = series_of(schema, "s", {4.0, 3.0});
    const Instant day = parse_iso8601("2021-03-04T00:00");
    raw.timestamps = {day + 8 * 3600 + 2 * 60, day + 10 * 3600 + 14 * 60};
    raw.end_time = day + 11 * 3600 + 16 * 60;
    auto q = quantise_series(raw, 1800);
    CHECK(q.timestamps.front() == day + 8 * 3600);
    const auto it = std::find(q.timestamps.begin(), q.timestamps.end(), day + 10 * 3600);
    REQUIRE(it != q.timestamps.end());
    // [08:00, 10:00) holds 4 periods, [10:00, 11:30) holds 3.
    CHECK(q.length() == 7);
    CHECK(q.obs(0, 0) == 1.0);
    CHECK(q.obs(6, 0) == 1.0);
    double total = 0.0;
    for (std::size_t t = 0; t < q.length(); ++t) total += q.obs(t, 0);
    CHECK(total == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("quantise: mass is conserved over random blocks and closures drop periods") {
    const auto schema = one_channel_schema();
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.integer(0, 9));
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(0.0, 20.0);
        auto raw = series_of(schema, "s", v);
        Instant t = 0;
        for (std::size_t i = 0; i < n; ++i) {
            raw.timestamps[i] = t;
            t += 1800 * rng.integer(1, 5);
        }
        raw.end_time = t;
        auto q = quantise_series(raw, 1800);
        double a = 0.0, b = 0.0;
        for (double x : v) a += x;
        for (std::size_t i = 0; i < q.length(); ++i) b += q.obs(i, 0);
        CHECK(b == doctest::Approx(a).epsilon(1e-12));
    }
    auto closed = series_of(schema, "c", {8.0});
    closed.end_time = 4 * 1800;
    closed.closures = {{1800, 3 * 1800}};
    auto q = quantise_series(closed, 1800);
    REQUIRE(q.length() == 2);
    CHECK(q.obs(0, 0) == 4.0);
    CHECK(q.timestamps[1] == 3 * 1800);
}

TEST_CASE("quantise: a block collapsing to zero periods names its boundaries") {
    const auto schema = one_channel_schema();
    auto raw = series_of(schema, "s", {1.0, 1.0});
    raw.timestamps = {0, 600};
    raw.end_time = 3600;
    try {
        quantise_series(raw, 1800);
        FAIL("expected CollapseError");
    } catch (const CollapseError& e) {
        CHECK(std::string(e.what()).find("1970-01-01T00:10:00") != std::string::npos);
    }
}

TEST_CASE("scalers: mean and population std per group, flagged constants") {
    const auto schema = one_channel_schema();
    auto m = fit_group_scalers({series_of(schema, "a", {1.0, 3.0})}, schema, {"store"});
    CHECK(m.lookup("a", "sales").mean == 2.0);
    CHECK(m.lookup("a", "sales").std == 1.0);
    CHECK(!m.lookup("a", "sales").flagged);

    auto c = fit_group_scalers({series_of(schema, "a", {5.0, 5.0, 5.0})}, schema, {"store"});
    CHECK(c.lookup("a", "sales").mean == 5.0);
    CHECK(c.lookup("a", "sales").std == 1.0);
    CHECK(c.lookup("a", "sales").flagged);

    const auto sa = series_of(schema, "a", {1.0, 2.0, 6.0}, "a");
    const auto sb = series_of(schema, "b", {10.0, 30.0, 20.0}, "b");
    auto two = fit_group_scalers({sa, sb}, schema, {"store"});
    const auto own = apply_scalers(sb, schema, two);
    auto as_a = sb;
    as_a.attributes["store"] = "a";
    const auto foreign = apply_scalers(as_a, schema, two);
    CHECK(own.obs(0, 0) != foreign.obs(0, 0));
    CHECK(own.obs(0, 0) == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-12));

    // Unseen groups fall back to the scaler over all training data.
    const auto& g = two.lookup("zzz", "sales");
    std::vector<double> all{1, 2, 6, 10, 30, 20};
    const double mean = std::accumulate(all.begin(), all.end(), 0.0) / 6.0;
    double var = 0.0;
    for (double x : all) var += (x - mean) * (x - mean);
    CHECK(g.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(g.std == doctest::Approx(std::sqrt(var / 6.0)).epsilon(1e-12));
    CHECK(g.invert(g.apply(7.5)) == doctest::Approx(7.5).epsilon(1e-12));
}

TEST_CASE("splits: ceil rule on distinct keys") {
    SplitSpec spec;
    struct Case { std::size_t n, train, val, test; };
    for (const auto& c : {Case{10, 6, 2, 2}, Case{3, 1, 1, 1}, Case{20, 13, 3, 4}}) {
        auto keys = numbered_keys(c.n);
        keys.push_back(keys.front());  // duplicates count once
        const auto a = make_splits(keys, spec);
        CHECK(a.n_keys == c.n);
        CHECK(a.n_train_keys == c.train);
        CHECK(a.n_val_keys == c.val);
        CHECK(a.n_test_keys == c.test);
        CHECK(a.part.front() == a.part.back());
    }
    // Numeric ordering: "10" sorts after "9".
    const auto a = make_splits(numbered_keys(10), spec);
    CHECK(a.part[0] == SplitPart::test);  // key "10"
    CHECK(a.part[9] == SplitPart::train);  // key "1"
    CHECK(count_part(a, SplitPart::test) == 2);
    CHECK_THROWS_AS(make_splits({"1", "2"}, spec), SplitError);
}

TEST_CASE("splits: no key lands in two parts, parts are chronological") {
    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::string> keys;
        const auto n = rng.integer(3, 60);
        for (int i = 0; i < 200; ++i) keys.push_back(std::to_string(rng.integer(0, n - 1)));
        SplitSpec spec;
        SplitAssignment a;
        try {
            a = make_splits(keys, spec);
        } catch (const SplitError&) {
            continue;
        }
        std::map<std::string, SplitPart> seen;
        double max_train = -1, min_val = 1e9, max_val = -1, min_test = 1e9;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            auto [it, fresh] = seen.emplace(keys[i], a.part[i]);
            CHECK(it->second == a.part[i]);
            const double k = std::stod(keys[i]);
            if (a.part[i] == SplitPart::train) max_train = std::max(max_train, k);
            if (a.part[i] == SplitPart::val) { min_val = std::min(min_val, k); max_val = std::max(max_val, k); }
            if (a.part[i] == SplitPart::test) min_test = std::min(min_test, k);
        }
        CHECK(max_train < min_val);
        CHECK(max_val < min_test);
    }
}

TEST_CASE("windowing: full, padded and skipped series") {
    const auto schema = one_channel_schema();
    std::vector<double> v48(48);
    std::iota(v48.begin(), v48.end(), 0.0);
    auto r48 = window_series(series_of(schema, "a", v48), schema, 32, 16, 48);
    REQUIRE(r48.rows.size() == 1);
    CHECK(r48.rows[0].pad_len == 0);
    CHECK(r48.rows[0].observed.front() == 0.0);
    CHECK(r48.rows[0].target.front() == 32.0);
    CHECK(r48.rows[0].target.back() == 47.0);

    std::vector<double> v40(40, 1.0);
    auto r40 = window_series(series_of(schema, "b", v40), schema, 32, 16, 16);
    REQUIRE(r40.rows.size() == 1);
    CHECK(r40.rows[0].pad_len == 8);
    for (std::size_t t = 0; t < 8; ++t) CHECK(r40.rows[0].observed[t] == kNumericalPad);

    auto r16 = window_series(series_of(schema, "c", std::vector<double>(16, 1.0)), schema, 32, 16, 16);
    CHECK(r16.rows.empty());
    CHECK(r16.skipped == 1);

    // Stride 16 over 80 steps: windows end at 80, 64, 48.
    auto r80 = window_series(series_of(schema, "d", std::vector<double>(80, 1.0)), schema, 32, 16, 16);
    CHECK(r80.rows.size() == 3);
}

TEST_CASE("instance normalization: examples and round trip") {
    const auto schema = one_channel_schema();
    WindowRow row;
    row.observed = {3.0, 4.0, 5.0};
    row.target = {6.0};
    row.scale = {Scaler{}};
    WindowRow flat = row;
    flat.observed = {2.0, 2.0, 2.0};
    auto b = make_batch({row, flat}, {0, 1}, schema, 3, 1);
    auto n = instance_normalize(b);
    CHECK(n.observed[0] == -2.0 / n.norm_state[0].std);
    CHECK(n.observed[2] == 0.0);
    CHECK(n.norm_state[0].last == 5.0);
    CHECK(n.norm_state[0].std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(n.observed[3] == 0.0);
    CHECK(n.observed[5] == 0.0);
    CHECK(n.norm_state[1].std == 1.0);
    CHECK(n.norm_state[1].flagged);
    const auto back = instance_denormalize(n.target, n.norm_state, 1);
    CHECK(back[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("dataset directory round trip and content hash") {
    auto synth = generate_synthetic_markdown(12, 3);
    testutil::TempDir dir("ds");
    save_dataset(synth.data, dir.path / "a");
    const auto loaded = load_dataset(dir.path / "a", {});
    CHECK(loaded.schema == synth.data.schema);
    REQUIRE(loaded.series.size() == synth.data.series.size());
    for (std::size_t i = 0; i < loaded.series.size(); ++i) {
        const auto& x = loaded.series[i];
        const auto& y = synth.data.series[i];
        CHECK(x.id == y.id);
        CHECK(x.timestamps == y.timestamps);
        REQUIRE(x.observed.size() == y.observed.size());
        for (std::size_t k = 0; k < x.observed.size(); ++k) CHECK(x.observed[k] == doctest::Approx(y.observed[k]).epsilon(1e-12));
    }
    save_dataset(loaded, dir.path / "b");
    CHECK(directory_hash(dir.path / "a") == directory_hash(dir.path / "b"));
    std::ofstream(dir.path / "b" / "extra.txt") << "x";
    CHECK(directory_hash(dir.path / "a") != directory_hash(dir.path / "b"));

    auto other = generate_synthetic_markdown(12, 3);
    save_dataset(other.data, dir.path / "c");
    CHECK(directory_hash(dir.path / "a") == directory_hash(dir.path / "c"));
}

TEST_CASE("dataset loading rejects schema violations") {
    testutil::TempDir dir("bad");
    auto synth = generate_synthetic_markdown(4, 1);
    save_dataset(synth.data, dir.path);
    {
        auto rows = read_csv(dir.path / "tvk.csv");
        std::ofstream out(dir.path / "tvk.csv");
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < rows[r].size(); ++c) {
                if (c) out << ',';
                // Out-of-range category code on the first data row.
                out << (r == 1 && c == rows[r].size() - 1 ? std::string("999") : rows[r][c]);
            }
            out << '\n';
        }
    }
    CHECK_THROWS_AS(load_dataset(dir.path, {}), SchemaError);
    CHECK_THROWS_AS(load_dataset(dir.path / "missing", {}), Error);
}

TEST_CASE("prepared data: scalers come from training windows and splits are disjoint") {
    auto synth = generate_synthetic_markdown(40, 2);
    PrepareOptions opt;
    const auto p = prepare_data(synth.data, opt);
    CHECK(!p.train.empty());
    CHECK(!p.val.empty());
    CHECK(!p.test.empty());
    std::set<std::string> tr, va, te;
    for (const auto& r : p.train) tr.insert(r.split_key);
    for (const auto& r : p.val) va.insert(r.split_key);
    for (const auto& r : p.test) te.insert(r.split_key);
    for (const auto& k : va) CHECK(!tr.count(k));
    for (const auto& k : te) CHECK((!tr.count(k) && !va.count(k)));

    // Observed values of training windows are standardized by scalers fitted on those windows.
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : p.train) {
        const std::size_t c_count = r.observed.size() / opt.lookback;
        for (std::size_t c = 0; c < c_count; ++c) {
            for (std::size_t t = r.pad_len; t < opt.lookback; ++t) {
                sum += r.observed[c * opt.lookback + t];
                ++count;
            }
        }
    }
    CHECK(std::abs(sum / static_cast<double>(count)) < 0.5);
}
