#include "langadv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace langadv {

double accuracy(const std::vector<int>& preds, const std::vector<int>& golds) {
    if (preds.size() != golds.size())
        throw std::invalid_argument("accuracy: length mismatch: " + std::to_string(preds.size()) +
                                    " vs " + std::to_string(golds.size()));
    if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
    long hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == golds[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<Span> extract_spans(const std::vector<int>& tags) {
    std::vector<Span> spans;
    int open_type = -1;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const int t = tags[i];
        if (t < 0 || t >= kNumTags)
            throw std::invalid_argument("extract_spans: tag out of range: " + std::to_string(t));
        const int pos = static_cast<int>(i);
        if (tag_is_inside(t) && tag_entity_type(t) == open_type) {
            spans.back().end = pos;
        } else if (t == 0) {
            open_type = -1;
        } else {  // B-X, or an orphan I-X treated as a span start
            open_type = tag_entity_type(t);
            spans.push_back({open_type, pos, pos});
        }
    }
    return spans;
}

long count_matching_spans(const std::vector<Span>& a, const std::vector<Span>& b) {
    std::vector<bool> used(b.size(), false);
    long matched = 0;
    for (const Span& s : a)
        for (std::size_t j = 0; j < b.size(); ++j)
            if (!used[j] && b[j] == s) {
                used[j] = true;
                ++matched;
                break;
            }
    return matched;
}

PrecisionRecall f1_from_counts(long matched, long pred_total, long gold_total) {
    PrecisionRecall pr;
    pr.precision = pred_total > 0 ? static_cast<double>(matched) / pred_total : 0.0;
    pr.recall = gold_total > 0 ? static_cast<double>(matched) / gold_total : 0.0;
    const double denom = pr.precision + pr.recall;
    pr.f1 = denom > 0.0 ? 2.0 * pr.precision * pr.recall / denom : 0.0;
    return pr;
}

PrecisionRecall span_f1(const std::vector<Span>& pred, const std::vector<Span>& gold) {
    return f1_from_counts(count_matching_spans(pred, gold), static_cast<long>(pred.size()),
                          static_cast<long>(gold.size()));
}

namespace {

double median_sorted(const std::vector<double>& v, std::size_t begin, std::size_t end) {
    const std::size_t n = end - begin;
    const std::size_t mid = begin + n / 2;
    return n % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty input");
    std::sort(values.begin(), values.end());
    return median_sorted(values, 0, values.size());
}

Quartiles quartiles(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("quartiles: empty input");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    Quartiles q;
    q.median = median_sorted(values, 0, n);
    // Tukey hinges: each half has (n+1)/2 elements, sharing the middle one
    // when n is odd.
    const std::size_t half = (n + 1) / 2;
    q.q1 = median_sorted(values, 0, half);
    q.q3 = median_sorted(values, n - half, n);
    return q;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("cosine: need equal nonempty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine: zero-norm vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

AlignmentReport alignment_report(EncoderParameters& encoder, const Vocab& vocab,
                                 const std::vector<ParallelPair>& pairs, int batch_size) {
    if (pairs.empty()) throw std::invalid_argument("alignment_report: no pairs");
    if (batch_size < 1) throw std::invalid_argument("alignment_report: batch_size must be >= 1");
    const int max_len = encoder.config.max_len;

    AlignmentReport report;
    for (std::size_t begin = 0; begin < pairs.size(); begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(pairs.size(), begin + static_cast<std::size_t>(batch_size));
        std::vector<std::vector<std::string>> src_rows, tgt_rows;
        for (std::size_t i = begin; i < end; ++i) {
            src_rows.push_back(pairs[i].source.tokens);
            tgt_rows.push_back(pairs[i].translated.tokens);
        }
        const Tensor src = pooled_embeddings(encoder, encode_batch(vocab, src_rows, max_len));
        const Tensor tgt = pooled_embeddings(encoder, encode_batch(vocab, tgt_rows, max_len));
        const int hidden = src.extent(1);
        for (std::size_t i = begin; i < end; ++i) {
            const int r = static_cast<int>(i - begin);
            std::vector<double> a(static_cast<std::size_t>(hidden));
            std::vector<double> b(static_cast<std::size_t>(hidden));
            for (int h = 0; h < hidden; ++h) {
                a[static_cast<std::size_t>(h)] = src.at2(r, h);
                b[static_cast<std::size_t>(h)] = tgt.at2(r, h);
            }
            try {
                report.similarities.push_back(cosine(a, b));
            } catch (const std::invalid_argument&) {
                ++report.excluded_pairs;
            }
        }
    }
    report.pair_count = static_cast<long>(report.similarities.size());
    if (report.pair_count > 0) {
        const Quartiles q = quartiles(report.similarities);
        report.median_cos = q.median;
        report.q1 = q.q1;
        report.q3 = q.q3;
    }
    return report;
}

AveragedMetrics average_runs(const std::vector<std::map<std::string, double>>& runs) {
    if (runs.empty()) throw std::invalid_argument("average_runs: no runs");
    AveragedMetrics out;
    out.per_run = runs;
    for (const auto& run : runs) {
        if (run.size() != runs.front().size())
            throw std::invalid_argument("average_runs: metric key mismatch across runs");
        for (const auto& [key, value] : run) {
            if (runs.front().count(key) == 0)
                throw std::invalid_argument("average_runs: metric key mismatch: " + key);
            out.mean[key] += value;
        }
    }
    for (auto& [key, value] : out.mean) value /= static_cast<double>(runs.size());
    return out;
}

CurveStats curve_stats(const std::vector<double>& series) {
    if (series.size() < 4)
        throw std::invalid_argument("curve_stats: need at least 4 checkpoints, got " +
                                    std::to_string(series.size()));
    CurveStats stats;
    stats.series = series;
    stats.tail_count = static_cast<int>((series.size() + 1) / 2);
    const std::size_t begin = series.size() - static_cast<std::size_t>(stats.tail_count);
    double sum = 0.0;
    for (std::size_t i = begin; i < series.size(); ++i) sum += series[i];
    stats.mean = sum / stats.tail_count;
    double ss = 0.0;
    for (std::size_t i = begin; i < series.size(); ++i) {
        const double d = series[i] - stats.mean;
        ss += d * d;
    }
    stats.stddev = std::sqrt(ss / stats.tail_count);
    return stats;
}

namespace {

void write_metric_row(std::ostream& out, const std::string& name, const AveragedMetrics& m) {
    out << name;
    for (const auto& [key, value] : m.mean) {
        (void)key;
        out << '\t' << value;
    }
    for (const auto& [key, value] : m.mean) {
        (void)value;
        out << '\t';
        for (std::size_t r = 0; r < m.per_run.size(); ++r) {
            if (r) out << ',';
            out << m.per_run[r].at(key);
        }
    }
    out << '\n';
}

}  // namespace

void write_comparison_table(std::ostream& out, const AveragedMetrics& baseline,
                            const AveragedMetrics& adversarial) {
    if (baseline.mean.size() != adversarial.mean.size())
        throw std::invalid_argument("comparison table: metric key mismatch between methods");
    out << std::setprecision(6) << std::fixed;
    out << "method";
    for (const auto& [key, value] : baseline.mean) {
        (void)value;
        if (adversarial.mean.count(key) == 0)
            throw std::invalid_argument("comparison table: metric key mismatch: " + key);
        out << '\t' << key << "_mean";
    }
    for (const auto& [key, value] : baseline.mean) {
        (void)value;
        out << '\t' << key << "_runs";
    }
    out << '\n';
    write_metric_row(out, "baseline", baseline);
    write_metric_row(out, "adversarial", adversarial);
    out.unsetf(std::ios::fixed);
}

void write_alignment_table(std::ostream& out, const std::string& pair_name,
                           const AlignmentReport& without_adv, const AlignmentReport& with_adv) {
    out << std::setprecision(6) << std::fixed;
    out << "pair\tmedian_without_adv\tmedian_with_adv\tq1_without_adv\tq3_without_adv"
           "\tq1_with_adv\tq3_with_adv\tpairs_without_adv\tpairs_with_adv"
           "\texcluded_without_adv\texcluded_with_adv\n";
    out << pair_name << '\t' << without_adv.median_cos << '\t' << with_adv.median_cos << '\t'
        << without_adv.q1 << '\t' << without_adv.q3 << '\t' << with_adv.q1 << '\t' << with_adv.q3
        << '\t' << without_adv.pair_count << '\t' << with_adv.pair_count << '\t'
        << without_adv.excluded_pairs << '\t' << with_adv.excluded_pairs << '\n';
    out.unsetf(std::ios::fixed);
}

}  // namespace langadv
