#include "steercal/contrast.hpp"
#include "steercal/metrics.hpp"
#include "steercal/model.hpp"
#include "steercal/retrieval.hpp"
#include "steercal/rng.hpp"
#include "steercal/steering.hpp"
#include "steercal/synthetic.hpp"

#include <benchmark/benchmark.h>

using namespace steercal;

namespace {

const SyntheticWorld & world() {
    static const SyntheticWorld w = [] {
        SyntheticConfig c;
        c.n_records = 420;
        return generate_synthetic(c);
    }();
    return w;
}

TokenSequence prompt_of_length(const LanguageModel & model, std::size_t n) {
    TokenSequence seq;
    const auto vocab = static_cast<std::size_t>(model.config().vocab_size);
    for (std::size_t i = 0; i < n; ++i) {
        seq.tokens.push_back(static_cast<TokenId>((i * 7919) % vocab));
    }
    return seq;
}

void BM_Forward(benchmark::State & state) {
    const auto & model = *world().model;
    const auto seq = prompt_of_length(model, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(seq, std::nullopt, {}));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(128)->Arg(256);

void BM_ForwardSteered(benchmark::State & state) {
    const auto & model = *world().model;
    const auto seq = prompt_of_length(model, 128);
    const InterventionSpec spec{model.config().num_layers / 2,
                                Vector(static_cast<std::size_t>(model.config().hidden_dim), 0.1), 1.5};
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(seq, spec, {}));
    }
}
BENCHMARK(BM_ForwardSteered);

// Representations for one item, built once.
struct ItemFixture {
    RepresentationSet reps;
    SteeringVector vector;
    Hyperplane surface;
};

const ItemFixture & item_fixture() {
    static const ItemFixture f = [] {
        const auto & w = world();
        std::vector<RelevanceRecord> records;
        for (const auto & r : w.corpus) {
            if (r.item_id == 1) {
                records.push_back(r);
            }
        }
        const auto pairs = build_contrast_pairs(*w.model, records, 1, PromptTemplates::defaults());
        ItemFixture out;
        out.reps = extract_representations(*w.model, pairs, w.model->config().num_layers / 2, 1);
        out.vector = compute_steering_vector(out.reps);
        out.surface = fit_hyperplane(out.reps);
        return out;
    }();
    return f;
}

void BM_SteeringVector(benchmark::State & state) {
    const auto & f = item_fixture();
    for (auto _ : state) {
        benchmark::DoNotOptimize(compute_steering_vector(f.reps));
    }
}
BENCHMARK(BM_SteeringVector);

void BM_FitHyperplane(benchmark::State & state) {
    const auto & f = item_fixture();
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_hyperplane(f.reps));
    }
}
BENCHMARK(BM_FitHyperplane);

void BM_CalibrationSweep(benchmark::State & state) {
    const auto & f = item_fixture();
    CalibrationOptions options;
    options.grid.step = 5.0 / static_cast<double>(state.range(0));
    options.workers = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(calibrate_strength(f.vector, f.surface, f.reps, options));
    }
}
BENCHMARK(BM_CalibrationSweep)->Arg(100)->Arg(1000);

void BM_Metrics(benchmark::State & state) {
    Rng rng(1);
    std::vector<AnswerSheet> pred, truth;
    for (std::int64_t u = 0; u < state.range(0); ++u) {
        AnswerSheet::Scores a{}, b{};
        for (std::size_t j = 0; j < a.size(); ++j) {
            a[j] = static_cast<int>(rng.below(4));
            b[j] = static_cast<int>(rng.below(4));
        }
        pred.emplace_back("u" + std::to_string(u), a);
        truth.emplace_back("u" + std::to_string(u), b);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(compute_metrics(pred, truth));
    }
}
BENCHMARK(BM_Metrics)->Arg(40)->Arg(1000);

void BM_Retrieve(benchmark::State & state) {
    const auto & user = world().users.front();
    const ToyEmbedder embedder(512, 0);
    const EmbeddedUser embedded(user, embedder, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(retrieve(embedded, bdi_item(4), embedder));
    }
}
BENCHMARK(BM_Retrieve);

} // namespace

BENCHMARK_MAIN();
