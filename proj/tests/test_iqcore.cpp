#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "rfmsm/canonical_io.hpp"
#include "rfmsm/iqcore.hpp"
#include "rfmsm/rng.hpp"
#include "rfmsm/siggen.hpp"

using namespace rfmsm;

namespace {

std::vector<unsigned char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

SignalDataset small_dataset(std::size_t per_cell = 2) {
    return generate_corpus(per_cell, {-10, 0, 10}, 7, support::short_frames(32));
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an rfmsm::Error";
    return ErrorCode::invalid_argument;
}

} // namespace

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int k = 0; k < 100; ++k) {
        const auto x = a.next_u64();
        EXPECT_EQ(x, b.next_u64());
        differs |= x != c.next_u64();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, UniformMomentsAndRange) {
    Rng rng(1);
    const int n = 200000;
    double sum = 0.0, ss = 0.0;
    for (int k = 0; k < n; ++k) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
        ss += u * u;
    }
    EXPECT_NEAR(sum / n, 0.5, 0.005);
    EXPECT_NEAR(ss / n - (sum / n) * (sum / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
    Rng rng(2);
    const int n = 200000;
    double sum = 0.0, ss = 0.0, s4 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double x = rng.normal();
        sum += x;
        ss += x * x;
        s4 += x * x * x * x;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(ss / n, 1.0, 0.015);
    EXPECT_NEAR(s4 / n, 3.0, 0.08);
}

TEST(Rng, BelowIsUnbiased) {
    Rng rng(3);
    std::vector<int> hist(7, 0);
    for (int k = 0; k < 70000; ++k) ++hist[rng.below(7)];
    for (int h : hist) EXPECT_NEAR(h, 10000, 400);
    EXPECT_EQ(rng.below(1), 0u);
}

TEST(Rng, ShuffleIsPermutation) {
    Rng rng(4);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    rng.shuffle(std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int k = 0; k < 50; ++k) EXPECT_EQ(sorted[k], k);
    EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Rng, DerivedSeedsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 100; ++a) {
        for (std::uint64_t b = 0; b < 10; ++b) seen.insert(derive_seed(5, a, b));
    }
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_NE(derive_seed(5, 1, 2), derive_seed(5, 2, 1));
}

TEST(IQFrame, ValidateRejectsMismatchAndNonFinite) {
    EXPECT_EQ(code_of([] { IQFrame({1.0, 2.0}, {1.0}).validate(); }), ErrorCode::shape_mismatch);
    EXPECT_EQ(code_of([] { IQFrame({}, {}).validate(); }), ErrorCode::invalid_argument);
    EXPECT_EQ(code_of([] { IQFrame({1.0, std::nan("")}, {0.0, 0.0}).validate(); }), ErrorCode::numerical_failure);
}

TEST(Standardization, StatsMatchDirectComputation) {
    std::vector<IQFrame> frames{IQFrame({1, 2, 3}, {0, 0, 3}), IQFrame({4, 5, 6}, {3, 3, 3})};
    const auto s = compute_stats(frames);
    EXPECT_DOUBLE_EQ(s.mean_i, 3.5);
    EXPECT_DOUBLE_EQ(s.mean_q, 2.0);
    EXPECT_NEAR(s.var_i, 17.5 / 6.0, 1e-12);
    EXPECT_NEAR(s.var_q, 12.0 / 6.0, 1e-12);
}

TEST(Standardization, StandardizedDataHasZeroMeanUnitVariance) {
    const auto ds = small_dataset(3);
    const auto std_ds = standardize(ds, compute_stats(ds));
    const auto s = compute_stats(std_ds);
    EXPECT_NEAR(s.mean_i, 0.0, 1e-12);
    EXPECT_NEAR(s.mean_q, 0.0, 1e-12);
    EXPECT_NEAR(s.var_i, 1.0, 1e-10);
    EXPECT_NEAR(s.var_q, 1.0, 1e-10);
}

TEST(Standardization, RoundTripRestoresFrame) {
    const auto ds = small_dataset();
    const auto stats = compute_stats(ds);
    const IQFrame back = destandardize(standardize(ds.frames[4], stats), stats);
    for (std::size_t n = 0; n < back.length(); ++n) {
        EXPECT_NEAR(back.i[n], ds.frames[4].i[n], 1e-12);
        EXPECT_NEAR(back.q[n], ds.frames[4].q[n], 1e-12);
    }
}

TEST(Standardization, Errors) {
    EXPECT_EQ(code_of([] { compute_stats(std::vector<IQFrame>{}); }), ErrorCode::empty_corpus);
    EXPECT_EQ(code_of([] { compute_stats(std::vector<IQFrame>{IQFrame({1, 1}, {0, 2})}); }),
              ErrorCode::degenerate_variance);
}

TEST(Split, SizesAndDisjointness) {
    SignalDataset ds = small_dataset(7);  // 5 * 3 * 7 = 105 frames
    const auto split = split_70_20_10(ds, 9);
    EXPECT_EQ(split.train.size(), 73u);
    EXPECT_EQ(split.val.size(), 21u);
    EXPECT_EQ(split.test.size(), 11u);
    std::set<std::uint64_t> ids;
    for (const auto* part : {&split.train, &split.val, &split.test}) ids.insert(part->ids.begin(), part->ids.end());
    EXPECT_EQ(ids.size(), ds.size());
    const auto again = split_70_20_10(ds, 9);
    EXPECT_EQ(again.train.ids, split.train.ids);
    EXPECT_NE(split_70_20_10(ds, 10).train.ids, split.train.ids);
}

TEST(Split, TooSmall) {
    SignalDataset ds = generate_corpus(1, {0}, 1, support::short_frames(32));
    EXPECT_EQ(code_of([&] { split_70_20_10(ds, 0); }), ErrorCode::too_small);
}

TEST(Canonical, RoundTripEqualsFieldByField) {
    SignalDataset ds = small_dataset();
    ds.frames.resize(10);
    ds.labels.resize(10);
    ds.ids.resize(10);
    std::ostringstream os;
    write_canonical(os, ds);
    const auto bytes = bytes_of(os.str());
    const SignalDataset back = parse_canonical(bytes, ds.meta.name);
    EXPECT_EQ(back.meta, ds.meta);
    EXPECT_EQ(back.labels, ds.labels);
    ASSERT_EQ(back.size(), 10u);
    for (std::size_t k = 0; k < 10; ++k) {
        for (std::size_t n = 0; n < ds.meta.frame_len; ++n) {
            EXPECT_EQ(back.frames[k].i[n], static_cast<double>(static_cast<float>(ds.frames[k].i[n])));
            EXPECT_EQ(back.frames[k].q[n], static_cast<double>(static_cast<float>(ds.frames[k].q[n])));
        }
    }
}

TEST(Canonical, LayoutIsMagicLengthHeaderBody) {
    SignalDataset ds;
    ds.meta = {"x", 2, 0.5, 2, {0}, {"a", "b"}};
    ds.frames = {IQFrame({1.0, 2.0}, {3.0, 4.0})};
    ds.labels = {{1, 0}};
    std::ostringstream os;
    write_canonical(os, ds);
    const std::string s = os.str();
    ASSERT_EQ(s.substr(0, 7), "RFMSM1\n");
    std::uint64_t len = 0;
    for (int k = 0; k < 8; ++k) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[7 + k])) << (8 * k);
    const auto header = nlohmann::json::parse(s.substr(15, len));
    EXPECT_EQ(header["num_frames"], 1);
    EXPECT_EQ(header["has_labels"], true);
    const std::size_t body = 15 + len;
    ASSERT_EQ(s.size(), body + 4 * 4 + 4);
    float vals[4];
    std::memcpy(vals, s.data() + body, sizeof vals);
    EXPECT_EQ(vals[0], 1.0f);  // I samples then Q samples
    EXPECT_EQ(vals[1], 2.0f);
    EXPECT_EQ(vals[2], 3.0f);
    EXPECT_EQ(vals[3], 4.0f);
    EXPECT_EQ(static_cast<unsigned char>(s[body + 16]), 1);
}

TEST(Canonical, DistinctErrorCodes) {
    SignalDataset ds = small_dataset();
    std::ostringstream os;
    write_canonical(os, ds);
    const std::string good = os.str();

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(code_of([&] { parse_canonical(bytes_of(bad_magic)); }), ErrorCode::bad_magic);
    EXPECT_EQ(code_of([&] { parse_canonical(bytes_of("RFM")); }), ErrorCode::bad_magic);

    std::string bad_json = good;
    bad_json[16] = '#';
    EXPECT_EQ(code_of([&] { parse_canonical(bytes_of(bad_json)); }), ErrorCode::bad_header);

    const std::string truncated = good.substr(0, good.size() - ds.size() * 4 - 100);
    EXPECT_EQ(code_of([&] { parse_canonical(bytes_of(truncated)); }), ErrorCode::truncated_body);

    const std::string short_labels = good.substr(0, good.size() - 2);
    EXPECT_EQ(code_of([&] { parse_canonical(bytes_of(short_labels)); }), ErrorCode::label_count_mismatch);
}

TEST(Canonical, FileRoundTripIsByteIdentical) {
    support::TempDir dir;
    const SignalDataset ds = small_dataset();
    write_canonical(dir / "a.rfm", ds);
    const SignalDataset back = load_canonical(dir / "a.rfm");
    write_canonical(dir / "b.rfm", back);
    EXPECT_EQ(support::read_file(dir / "a.rfm"), support::read_file(dir / "b.rfm"));
    EXPECT_EQ(back.meta.name, "a");
    EXPECT_EQ(code_of([&] { load_canonical(dir / "missing.rfm"); }), ErrorCode::io);
}

TEST(Canonical, ValidationOnWrite) {
    SignalDataset ds = small_dataset();
    ds.labels[0].class_id = 9;
    std::ostringstream os;
    EXPECT_EQ(code_of([&] { write_canonical(os, ds); }), ErrorCode::invalid_argument);
    ds = small_dataset();
    ds.labels.pop_back();
    EXPECT_EQ(code_of([&] { write_canonical(os, ds); }), ErrorCode::label_count_mismatch);
}
