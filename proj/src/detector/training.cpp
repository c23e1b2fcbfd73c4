#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pibase/detector.hpp"

namespace pibase::detector {

namespace {

struct Sample {
    IntegralImage ii;
    double inv_norm = 1.0;
};

std::vector<Sample> prepare(std::span<const GrayImage> images, WindowSize base) {
    std::vector<Sample> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        if (img.width() != base.w || img.height() != base.h) {
            throw ArgumentError("training sample size differs from the base window");
        }
        const WindowTables tables(img);
        const double variance =
            std::max(kMinWindowVariance, tables.variance(Rect{0, 0, base.w, base.h}));
        out.push_back({tables.sum(), window_inv_norm(variance, 1.0)});
    }
    return out;
}

// Per-feature sample order by feature value; selection sweeps these columns
// each round while only the weights change.
class FeatureColumns {
public:
    FeatureColumns(std::span<const HaarFeature> pool, std::span<const Sample> samples)
        : n_(samples.size()), values_(pool.size() * n_), order_(pool.size() * n_) {
        std::vector<std::pair<float, std::uint32_t>> column(n_);
        for (std::size_t j = 0; j < pool.size(); ++j) {
            for (std::size_t i = 0; i < n_; ++i) {
                const double v =
                    eval_feature(pool[j], samples[i].ii, {0, 0}, 1.0, samples[i].inv_norm);
                column[i] = {static_cast<float>(v), static_cast<std::uint32_t>(i)};
            }
            std::sort(column.begin(), column.end());
            for (std::size_t i = 0; i < n_; ++i) {
                values_[j * n_ + i] = column[i].first;
                order_[j * n_ + i] = column[i].second;
            }
        }
    }

    [[nodiscard]] std::span<const float> values(std::size_t j) const {
        return {values_.data() + j * n_, n_};
    }
    [[nodiscard]] std::span<const std::uint32_t> order(std::size_t j) const {
        return {order_.data() + j * n_, n_};
    }

private:
    std::size_t n_;
    std::vector<float> values_;
    std::vector<std::uint32_t> order_;
};

struct Split {
    double error = std::numeric_limits<double>::infinity();
    std::size_t feature = 0;
    double threshold = 0.0;
    int polarity = 1;
};

Split best_split(const FeatureColumns& columns, std::size_t pool_size,
                 std::span<const double> weights, std::span<const std::uint8_t> labels,
                 double total_pos, double total_neg) {
    Split best;
    for (std::size_t j = 0; j < pool_size; ++j) {
        const auto values = columns.values(j);
        const auto order = columns.order(j);
        const std::size_t n = values.size();
        const auto consider = [&](double error, double threshold, int polarity) {
            if (error < best.error) best = {error, j, threshold, polarity};
        };
        // Threshold below every value: nothing votes positive for polarity +1.
        consider(total_pos, static_cast<double>(values[0]) - 1.0, 1);
        consider(total_neg, static_cast<double>(values[0]) - 1.0, -1);
        double below_pos = 0.0;
        double below_neg = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto idx = order[i];
            (labels[idx] ? below_pos : below_neg) += weights[idx];
            if (i + 1 < n && values[i + 1] == values[i]) continue;
            const double threshold =
                i + 1 < n ? 0.5 * (static_cast<double>(values[i]) + static_cast<double>(values[i + 1]))
                          : static_cast<double>(values[i]) + 1.0;
            consider(below_neg + (total_pos - below_pos), threshold, 1);
            consider(below_pos + (total_neg - below_neg), threshold, -1);
        }
    }
    return best;
}

double rate_at_or_above(std::span<const double> scores, double threshold) {
    if (scores.empty()) return 0.0;
    const auto n = std::count_if(scores.begin(), scores.end(),
                                 [threshold](double s) { return s >= threshold; });
    return static_cast<double>(n) / static_cast<double>(scores.size());
}

}  // namespace

StageResult train_stage(std::span<const GrayImage> positives, std::span<const GrayImage> negatives,
                        std::span<const HaarFeature> pool, const StageTargets& targets) {
    if (positives.empty() || negatives.empty()) {
        throw ArgumentError("train_stage needs positive and negative samples");
    }
    if (pool.empty()) throw ArgumentError("train_stage needs a non-empty feature pool");
    if (!(targets.max_fpr > 0.0 && targets.max_fpr < 1.0) ||
        !(targets.min_tpr > 0.0 && targets.min_tpr <= 1.0) || targets.max_rounds < 1) {
        throw ArgumentError("inconsistent stage targets");
    }
    const WindowSize base{positives[0].width(), positives[0].height()};

    std::vector<Sample> samples = prepare(positives, base);
    {
        auto neg = prepare(negatives, base);
        samples.insert(samples.end(), std::make_move_iterator(neg.begin()),
                       std::make_move_iterator(neg.end()));
    }
    const std::size_t n_pos = positives.size();
    const std::size_t n = samples.size();
    std::vector<std::uint8_t> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);

    // Uniform per class, so each class carries half the mass.
    std::vector<double> initial(n);
    for (std::size_t i = 0; i < n; ++i) {
        initial[i] = labels[i] ? 0.5 / static_cast<double>(n_pos)
                               : 0.5 / static_cast<double>(n - n_pos);
    }
    std::vector<double> weights = initial;

    const FeatureColumns columns(pool, samples);
    std::vector<double> scores(n, 0.0);
    std::vector<double> pos_scores(n_pos);
    std::vector<double> neg_scores(n - n_pos);
    std::vector<std::uint8_t> votes(n);

    StageResult result;
    double alpha_sum = 0.0;
    double bound = 1.0;

    for (int round = 0; round < targets.max_rounds; ++round) {
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        for (auto& w : weights) w /= total;
        const double normalized_sum = std::accumulate(weights.begin(), weights.end(), 0.0);
        double total_pos = 0.0;
        double total_neg = 0.0;
        for (std::size_t i = 0; i < n; ++i) (labels[i] ? total_pos : total_neg) += weights[i];

        const Split split = best_split(columns, pool.size(), weights, labels, total_pos, total_neg);
        WeakClassifier weak{pool[split.feature], split.threshold, split.polarity, 0.0};

        // Exact error with double-precision feature values, as detection sees them.
        double error = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = eval_feature(weak.feature, samples[i].ii, {0, 0}, 1.0, samples[i].inv_norm);
            votes[i] = weak.vote(v) ? 1 : 0;
            if (votes[i] != labels[i]) error += weights[i];
        }
        if (error >= 0.5) {
            throw TrainingError("no feature in the pool beats chance (weighted error " +
                                std::to_string(error) + ")");
        }

        const bool perfect = error <= 0.0;
        if (perfect) {
            weak.alpha = kAlphaCap;
        } else {
            const double beta = error / (1.0 - error);
            weak.alpha = std::log(1.0 / beta);
            for (std::size_t i = 0; i < n; ++i) {
                if (votes[i] == labels[i]) weights[i] *= beta;
            }
        }
        alpha_sum += weak.alpha;
        bound *= perfect ? 0.0 : 2.0 * std::sqrt(error * (1.0 - error));
        result.stage.weak.push_back(weak);

        for (std::size_t i = 0; i < n; ++i) {
            if (votes[i]) scores[i] += weak.alpha;
        }
        std::copy(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(n_pos), pos_scores.begin());
        std::copy(scores.begin() + static_cast<std::ptrdiff_t>(n_pos), scores.end(), neg_scores.begin());

        // Start from the AdaBoost threshold and lower it until the positive
        // rate target holds.
        const double half = 0.5 * alpha_sum;
        auto sorted = pos_scores;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const auto keep = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::ceil(targets.min_tpr * static_cast<double>(n_pos) - 1e-9)), 1,
            n_pos);
        result.stage.threshold = std::min(half, sorted[keep - 1]);
        result.tpr = rate_at_or_above(pos_scores, result.stage.threshold);
        result.fpr = rate_at_or_above(neg_scores, result.stage.threshold);

        double strong_error = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if ((scores[i] >= half ? 1 : 0) != labels[i]) strong_error += initial[i];
        }
        result.trace.push_back({split.feature, error, weak.alpha, normalized_sum, strong_error,
                                bound, result.tpr, result.fpr});

        const int rounds = round + 1;
        if (perfect) break;
        if (rounds >= targets.min_rounds && result.fpr <= targets.max_fpr) break;
    }
    result.reached_target = result.tpr >= targets.min_tpr - 1e-12 && result.fpr <= targets.max_fpr;
    return result;
}

CascadeResult train_cascade(std::span<const GrayImage> positives,
                            std::span<const GrayImage> negatives, std::span<const HaarFeature> pool,
                            const CascadeTargets& targets, const NegativeMiner& miner) {
    if (positives.empty() || negatives.empty()) {
        throw ArgumentError("train_cascade needs positive and negative samples");
    }
    const WindowSize base{positives[0].width(), positives[0].height()};
    std::vector<CascadeStage> stages;
    std::vector<StageReport> reports;
    std::vector<GrayImage> remaining(negatives.begin(), negatives.end());
    double cumulative = 1.0;
    const std::size_t enumerated = generate_features(base.w, base.h).size();

    const auto metadata = [&] {
        nlohmann::json meta;
        meta["trainer"] = "adaboost-attentional-cascade";
        meta["enumerated_feature_count"] = enumerated;
        meta["pool_size"] = pool.size();
        meta["positives"] = positives.size();
        meta["negatives"] = negatives.size();
        meta["targets"] = {{"per_stage_tpr", targets.per_stage_tpr},
                           {"per_stage_fpr", targets.per_stage_fpr},
                           {"overall_fpr", targets.overall_fpr}};
        auto& st = meta["stages"] = nlohmann::json::array();
        for (const auto& r : reports) {
            st.push_back({{"weak", r.weak_count},
                          {"negatives", r.negatives_used},
                          {"tpr", r.tpr},
                          {"fpr", r.fpr},
                          {"cumulative_fpr", r.cumulative_fpr}});
        }
        return meta;
    };
    const auto partial = [&]() -> std::optional<CascadeModel> {
        if (stages.empty()) return std::nullopt;
        return CascadeModel(base, stages, metadata());
    };

    const std::size_t floor = std::max<std::size_t>(1, targets.min_negatives);
    for (int s = 0; s < targets.max_stages && remaining.size() >= floor; ++s) {
        StageTargets st{targets.per_stage_tpr, targets.per_stage_fpr, targets.max_rounds,
                        stages.empty() ? 1 : static_cast<int>(stages.back().weak.size())};
        StageResult result;
        try {
            result = train_stage(positives, remaining, pool, st);
        } catch (const TrainingError& e) {
            throw TrainingError(e.what(), partial());
        }
        if (!result.reached_target) {
            throw TrainingError("stage " + std::to_string(s) + " reached fpr " +
                                    std::to_string(result.fpr) + " within the round cap",
                                partial());
        }
        const auto& stage = result.stage;
        std::vector<GrayImage> survivors;
        for (auto& img : remaining) {
            const WindowTables tables(img);
            const double variance =
                std::max(kMinWindowVariance, tables.variance(Rect{0, 0, base.w, base.h}));
            if (stage_score(stage, tables.sum(), {0, 0}, 1.0, window_inv_norm(variance, 1.0)) >=
                stage.threshold) {
                survivors.push_back(std::move(img));
            }
        }
        const std::size_t used = remaining.size();
        remaining = std::move(survivors);
        cumulative *= result.fpr;
        reports.push_back({stage.weak.size(), used, result.tpr, result.fpr, cumulative});
        stages.push_back(stage);
        if (!miner) {
            if (cumulative <= targets.overall_fpr) break;
            continue;
        }
        // With a miner the training set rates say nothing about unseen
        // clutter; keep adding stages until mining comes back empty.
        if (remaining.size() < negatives.size()) {
            auto fresh = miner(CascadeModel(base, stages), negatives.size() - remaining.size());
            for (auto& img : fresh) remaining.push_back(std::move(img));
        }
    }
    CascadeModel model(base, std::move(stages), metadata());
    std::size_t held = 0;
    for (const auto& img : negatives) {
        held += run_cascade(model, WindowTables(img), {0, 0}, 1.0).accepted ? 1 : 0;
    }
    const double held_fpr = static_cast<double>(held) / static_cast<double>(negatives.size());
    model.metadata()["cumulative_fpr"] = cumulative;
    model.metadata()["held_fpr"] = held_fpr;
    return {std::move(model), std::move(reports), cumulative, held_fpr};
}

}  // namespace pibase::detector
