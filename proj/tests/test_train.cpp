#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fixtures.hpp"
#include "rfmsm/fewshot.hpp"
#include "rfmsm/train.hpp"

using namespace rfmsm;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an rfmsm::Error";
    return ErrorCode::invalid_argument;
}

const SignalDataset& full_grid() {
    static const SignalDataset ds = generate_corpus(10, snr_range(-20, 20), 31, support::short_frames(64));
    return ds;
}

std::map<std::pair<int, int>, int> histogram(const SignalDataset& ds) {
    std::map<std::pair<int, int>, int> h;
    for (const auto& l : ds.labels) ++h[{l.class_id, l.snr_db}];
    return h;
}

PretrainConfig tiny_pretrain(std::size_t epochs) {
    PretrainConfig c;
    c.arch = support::tiny_resnet();
    c.batch_size = 8;
    c.max_epochs = epochs;
    c.patience = epochs;
    c.seed = 4;
    return c;
}

SignalDataset toy_corpus(std::size_t frames, int snr = 10) {
    SignalDataset ds = generate_corpus((frames + 4) / 5, {snr}, 8, support::short_frames(64));
    std::vector<std::size_t> keep(frames);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    return subset(ds, keep);
}

/// One long baseband pulse per frame at 30 dB: mostly signal, so masked samples are predictable.
SignalDataset learnable_corpus(std::size_t frames) {
    GeneratorConfig g = support::short_frames(64);
    g.n_pulses_min = g.n_pulses_max = 1;
    g.pulse_width_min_us = 48.0;
    g.pulse_width_max_us = 60.0;
    g.pri_min_us = g.pri_max_us = 70.0;
    SignalDataset ds = generate_corpus((frames + 4) / 5, {30}, 8, g);
    std::vector<std::size_t> keep(frames);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    return subset(ds, keep);
}

FinetuneConfig quick_finetune(std::size_t epochs, std::size_t freeze) {
    FinetuneConfig c;
    c.epochs = epochs;
    c.freeze_encoder_epochs = freeze;
    c.seed = 2;
    return c;
}

} // namespace

TEST(FewShot, SizesAreCellsTimesShots) {
    for (std::size_t n : {1u, 5u, 10u}) {
        const auto shots = sample_nshot(full_grid(), {n, 3});
        EXPECT_EQ(shots.size(), 205 * n);
        const auto h = histogram(shots);
        EXPECT_EQ(h.size(), 205u);
        for (const auto& [cell, count] : h) ASSERT_EQ(count, static_cast<int>(n));
    }
}

TEST(FewShot, UniformHistogramProperty) {
    Rng meta(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t per_cell = 1 + meta.below(4);
        std::vector<int> grid;
        for (int s = -6; s <= 6; s += 2)
            if (meta.below(2)) grid.push_back(s);
        if (grid.empty()) grid.push_back(0);
        const auto ds = generate_corpus(per_cell, grid, meta.next_u64(), support::short_frames(64));
        const std::size_t n = 1 + meta.below(per_cell);
        const auto shots = sample_nshot(ds, {n, meta.next_u64()});
        ASSERT_EQ(shots.size(), n * 5 * grid.size());
        for (const auto& [cell, count] : histogram(shots)) ASSERT_EQ(count, static_cast<int>(n));
    }
}

TEST(FewShot, NoDuplicatesAndSeedDependence) {
    const auto a = sample_nshot(full_grid(), {5, 1});
    EXPECT_EQ(std::set<std::uint64_t>(a.ids.begin(), a.ids.end()).size(), a.size());
    EXPECT_EQ(sample_nshot(full_grid(), {5, 1}).ids, a.ids);
    EXPECT_NE(sample_nshot(full_grid(), {5, 2}).ids, a.ids);
}

TEST(FewShot, StableUnderReordering) {
    std::vector<std::size_t> order(full_grid().size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(9);
    rng.shuffle(std::span<std::size_t>(order));
    const SignalDataset shuffled = subset(full_grid(), order);
    const auto a = sample_nshot(full_grid(), {2, 7}), b = sample_nshot(shuffled, {2, 7});
    EXPECT_EQ(a.ids, b.ids);
    EXPECT_EQ(a.frames, b.frames);
}

TEST(FewShot, InsufficientCellNamesCell) {
    std::vector<std::size_t> keep;
    int dropped = 0;
    for (std::size_t p = 0; p < full_grid().size(); ++p) {
        const auto& l = full_grid().labels[p];
        if (l.class_id == 3 && l.snr_db == -4 && dropped < 5) {
            ++dropped;
            continue;
        }
        keep.push_back(p);
    }
    const SignalDataset holey = subset(full_grid(), keep);
    try {
        sample_nshot(holey, {10, 0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_cell);
        EXPECT_NE(std::string(e.what()).find("class 3, snr -4"), std::string::npos) << e.what();
    }
    EXPECT_NO_THROW(sample_nshot(holey, {1, 0}));
    EXPECT_EQ(code_of([&] { sample_nshot(full_grid(), {0, 0}); }), ErrorCode::invalid_argument);
}

TEST(DomainPair, CrossLengthBundle) {
    Checkpoint ck;
    ck.params = init_params(ArchitectureDescriptor::resnet1d_default(), 0);
    ck.provenance["dataset"] = {{"name", "src"}, {"frame_len", 1024}, {"t_res_us", 0.01}, {"n_cls", 24}};
    const DomainDescriptor src = source_domain(ck);
    EXPECT_EQ(src.frame_len, 1024u);
    EXPECT_EQ(src.n_cls, 24);

    const auto b = prepare_domain_pair({src, {"tgt", 512, 0.02, 5}}, ck);
    EXPECT_EQ(b.flatten_dim, 64u * ck.params.arch.embedding_channels());
    EXPECT_EQ(b.n_cls, 5u);
    EXPECT_EQ(b.provenance()["source"]["frame_len"], 1024);
    EXPECT_EQ(b.provenance()["target"]["t_res_us"], 0.02);
    for (const auto& a : b.encoder.arrays) EXPECT_TRUE(a.name.starts_with("encoder.")) << a.name;

    Classifier<float> clf(b.arch, b.frame_len, b.n_cls);
    clf.encoder.load_from(b.encoder);
    EXPECT_EQ(clf.forward(Tensor<float>(2, 2, 512)).channels, 5u);

    EXPECT_EQ(code_of([&] { prepare_domain_pair({src, {"tgt", 130, 0.02, 5}}, ck); }), ErrorCode::indivisible_length);
}

TEST(Pretrain, SmokeLossDrops) {
    auto cfg = tiny_pretrain(20);
    cfg.arch.stem_channels = 16;
    cfg.arch.stage_channels = {16, 16};
    cfg.batch_size = 4;
    const auto res = pretrain(learnable_corpus(64), cfg);
    ASSERT_EQ(res.train_losses.size(), 20u);
    EXPECT_LT(res.train_losses.back(), 0.7 * res.train_losses.front());
    EXPECT_EQ(res.val_losses[res.best_epoch - 1], *std::min_element(res.val_losses.begin(), res.val_losses.end()));
    EXPECT_EQ(res.checkpoint.provenance["split"]["train"], 44);
    EXPECT_EQ(res.checkpoint.provenance["split"]["test"], 8);
}

TEST(Pretrain, OneEpochBeatsUntrainedModel) {
    const auto ds = toy_corpus(64);
    const auto untrained = pretrain(ds, [] {
        auto c = tiny_pretrain(1);
        c.lr = 1e-12;
        return c;
    }());
    const auto trained = pretrain(ds, [] {
        auto c = tiny_pretrain(1);
        c.lr = 1e-2;
        return c;
    }());
    EXPECT_GT(untrained.test_loss, trained.test_loss);
}

TEST(Pretrain, BitDeterministic) {
    const auto ds = toy_corpus(40);
    const auto a = pretrain(ds, tiny_pretrain(3)), b = pretrain(ds, tiny_pretrain(3));
    EXPECT_EQ(checkpoint_bytes(a.checkpoint), checkpoint_bytes(b.checkpoint));
    auto other = tiny_pretrain(3);
    other.seed = 5;
    EXPECT_NE(checkpoint_bytes(pretrain(ds, other).checkpoint), checkpoint_bytes(a.checkpoint));
}

TEST(Pretrain, Errors) {
    EXPECT_EQ(code_of([] { pretrain(toy_corpus(5), tiny_pretrain(1)); }), ErrorCode::too_small);
    auto bad = tiny_pretrain(1);
    bad.lr = 0.0;
    EXPECT_EQ(code_of([&] { pretrain(toy_corpus(40), bad); }), ErrorCode::config);
    SignalDataset odd = generate_corpus(10, {0}, 1, support::short_frames(66));
    EXPECT_EQ(code_of([&] { pretrain(odd, tiny_pretrain(1)); }), ErrorCode::indivisible_length);
}

TEST(Masks, DependOnEpochAndIdOnly) {
    Tensor<float> base(3, 2, 128, 1.0f);
    const std::vector<std::uint64_t> ids{10, 11, 12}, swapped{12, 11, 10};
    const MaskSpec spec{MaskStrategy::A, 0.5, 0};
    const NoiseModel noise{0.0, 1.0};
    Tensor<float> a = base, b = base, c = base;
    const auto ma = mask_batch(a, ids, spec, noise, derive_seed(1, 1));
    const auto mb = mask_batch(b, swapped, spec, noise, derive_seed(1, 1));
    const auto mc = mask_batch(c, ids, spec, noise, derive_seed(1, 2));
    EXPECT_EQ(ma[0], mb[2]);
    EXPECT_EQ(ma[1], mb[1]);
    EXPECT_NE(ma[0], mc[0]);
    EXPECT_NE(ma[0], ma[1]);
}

TEST(Masks, TargetStaysClean) {
    const Tensor<float> clean = to_tensor(toy_corpus(8), StandardizationStats{});
    for (auto s : kAllStrategies) {
        Tensor<float> input = clean;
        const std::vector<std::uint64_t> ids{0, 1, 2, 3, 4, 5, 6, 7};
        mask_batch(input, ids, {s, 0.7, 0}, {0.0, 1.0}, 3);
        EXPECT_EQ(l1_loss(clean, clean).value, 0.0);  // identity model on unmasked input
        EXPECT_GT(l1_loss(input, clean).value, 0.0);
    }
}

TEST(Finetune, StepsPerEpochKeepPartialBatch) {
    const auto shots = sample_nshot(full_grid(), {1, 0});
    ASSERT_EQ(shots.size(), 205u);
    const auto ck = train_baseline(shots, quick_finetune(2, 0), support::tiny_resnet());
    EXPECT_EQ(ck.optimizer.step, 2u * 26u);
    for (const auto& m : ck.optimizer.moments) EXPECT_EQ(m.step, 52u) << m.name;
}

TEST(Finetune, FreezeWindowKeepsEncoderIdentical) {
    const auto pre = pretrain(toy_corpus(40), tiny_pretrain(2)).checkpoint;
    const auto shots = toy_corpus(20);
    const auto frozen = finetune(pre, shots, quick_finetune(3, 3));
    const auto thawed = finetune(pre, shots, quick_finetune(3, 0));
    for (const auto& a : pre.params.select("encoder.").arrays) {
        EXPECT_EQ(frozen.params.find(a.name)->values, a.values) << a.name;
        EXPECT_NE(thawed.params.find(a.name)->values, a.values) << a.name;
    }
    for (const auto& m : frozen.optimizer.moments) {
        if (m.name.starts_with("encoder.")) {
            EXPECT_EQ(m.step, 0u) << m.name;
        }
    }
    EXPECT_EQ(frozen.provenance["source_checkpoint"], checkpoint_id(pre));
}

TEST(Finetune, UsesShotStatistics) {
    const auto pre = pretrain(toy_corpus(40), tiny_pretrain(1)).checkpoint;
    const auto shots = toy_corpus(20);
    const auto ck = finetune(pre, shots, quick_finetune(1, 1));
    ASSERT_TRUE(ck.stats.has_value());
    EXPECT_EQ(*ck.stats, compute_stats(shots));
    EXPECT_NE(*ck.stats, *pre.stats);
}

TEST(Finetune, SeparableToyReachesPerfectTrainingAccuracy) {
    const auto shots = toy_corpus(20, 20);
    const auto ck = train_baseline(shots, [] {
        auto c = quick_finetune(100, 0);
        c.lr = 1e-3;
        return c;
    }(), support::tiny_resnet());
    EXPECT_EQ(ck.provenance["train_accuracy"].get<double>(), 1.0);
}

TEST(Finetune, BitDeterministicAndSeeded) {
    const auto pre = pretrain(toy_corpus(40), tiny_pretrain(1)).checkpoint;
    const auto shots = toy_corpus(20);
    EXPECT_EQ(checkpoint_bytes(finetune(pre, shots, quick_finetune(2, 1))),
              checkpoint_bytes(finetune(pre, shots, quick_finetune(2, 1))));
    auto other = quick_finetune(2, 1);
    other.seed = 9;
    EXPECT_NE(checkpoint_bytes(finetune(pre, shots, other)), checkpoint_bytes(finetune(pre, shots, quick_finetune(2, 1))));
}

TEST(Finetune, Errors) {
    const auto shots = toy_corpus(20);
    auto bad = quick_finetune(2, 3);
    EXPECT_EQ(code_of([&] { train_baseline(shots, bad, support::tiny_resnet()); }), ErrorCode::config);
    SignalDataset unlabeled = shots;
    unlabeled.labels.clear();
    EXPECT_THROW(train_baseline(unlabeled, quick_finetune(1, 0), support::tiny_resnet()), Error);
}

TEST(Argmax, TiesGoToLowerIndex) {
    const float z[] = {1.0f, 3.0f, 3.0f, -1.0f};
    EXPECT_EQ(argmax_row(z, 4), 1);
    const float flat[] = {0.0f, 0.0f, 0.0f};
    EXPECT_EQ(argmax_row(flat, 3), 0);
}
