#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "langadv/corpus.hpp"
#include "langadv/encoder.hpp"

namespace langadv {

// Exact-match fraction; throws on empty input or length mismatch.
double accuracy(const std::vector<int>& preds, const std::vector<int>& golds);

// ---------------------------------------------------------------------------
// Entity spans and F1.
// ---------------------------------------------------------------------------

struct Span {
    int type = 0;   // entity type index
    int start = 0;  // token index
    int end = 0;    // inclusive
    bool operator==(const Span&) const = default;
};

// Maximal B-X (I-X)* runs become spans. An orphan I-X (following O, nothing,
// or a different type) starts a new span, matching the BIO repair rule, so
// extracting from repaired and unrepaired tags gives the same spans.
std::vector<Span> extract_spans(const std::vector<int>& tags);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

long count_matching_spans(const std::vector<Span>& a, const std::vector<Span>& b);
PrecisionRecall f1_from_counts(long matched, long pred_total, long gold_total);

// Exact-boundary, exact-type span matching; F1 = 0 when P + R = 0.
PrecisionRecall span_f1(const std::vector<Span>& pred, const std::vector<Span>& gold);

// ---------------------------------------------------------------------------
// Order statistics and cosine alignment.
// ---------------------------------------------------------------------------

// Even-count median is the midpoint of the middle two values.
double median(std::vector<double> values);

struct Quartiles {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};

// Tukey hinges: the halves share the middle element when the count is odd.
Quartiles quartiles(std::vector<double> values);

double cosine(const std::vector<double>& a, const std::vector<double>& b);  // throws on zero norm

struct AlignmentReport {
    std::vector<double> similarities;  // one per included pair
    double median_cos = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    long pair_count = 0;      // pairs included
    long excluded_pairs = 0;  // pairs dropped for a zero-norm embedding
};

// Cosine similarity between the pooled embeddings of each source document and
// its translation. Zero-norm embeddings exclude the pair and are counted.
AlignmentReport alignment_report(EncoderParameters& encoder, const Vocab& vocab,
                                 const std::vector<ParallelPair>& pairs, int batch_size = 32);

// ---------------------------------------------------------------------------
// Multi-run aggregation and training curves.
// ---------------------------------------------------------------------------

struct AveragedMetrics {
    std::map<std::string, double> mean;
    std::vector<std::map<std::string, double>> per_run;
};

// Arithmetic mean per metric key; all runs must share the same key set.
AveragedMetrics average_runs(const std::vector<std::map<std::string, double>>& runs);

struct CurveStats {
    std::vector<double> series;
    int tail_count = 0;   // number of final checkpoints covered (ceil(n/2))
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

// Mean and population std over the final half of the series; needs >= 4 points.
CurveStats curve_stats(const std::vector<double>& series);

// ---------------------------------------------------------------------------
// Report tables (tab-separated; one method or language pair per row).
// ---------------------------------------------------------------------------

// Rows baseline/adversarial; columns: method, mean per metric key, then the
// per-run values per key (comma-joined).
void write_comparison_table(std::ostream& out, const AveragedMetrics& baseline,
                            const AveragedMetrics& adversarial);

// One row per language pair: median cosine without/with adversarial training,
// plus quartiles and pair counts.
void write_alignment_table(std::ostream& out, const std::string& pair_name,
                           const AlignmentReport& without_adv, const AlignmentReport& with_adv);

}  // namespace langadv
