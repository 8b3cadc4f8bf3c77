#include "plotcast/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "plotcast/generators.hpp"

namespace plotcast {

std::optional<std::string> validate_ranking(const RankingRecord& record) {
  const int k = static_cast<int>(record.ranks.size());
  if (k < 2) return "a ranking needs at least two models";
  if (record.aspect != "consistency" && record.aspect != "storiability")
    return "unknown aspect '" + record.aspect + "'";
  std::vector<int> seen(static_cast<std::size_t>(k) + 1, 0);
  for (const auto& [tag, rank] : record.ranks) {
    if (!parse_model_tag(tag)) return "unknown model tag '" + tag + "'";
    if (rank < 1 || rank > k) return "rank " + std::to_string(rank) + " for " + tag + " outside 1.." + std::to_string(k);
    if (++seen[static_cast<std::size_t>(rank)] > 1) return "duplicate rank " + std::to_string(rank);
  }
  for (int r = 1; r <= k; ++r)
    if (seen[static_cast<std::size_t>(r)] == 0) return "missing rank " + std::to_string(r);
  return std::nullopt;
}

Json ranking_to_json(const RankingRecord& r) {
  return Json{{"instance_id", r.instance_id}, {"aspect", r.aspect}, {"ranks", r.ranks}, {"rater_id", r.rater_id}};
}

RankingRecord ranking_from_json(const Json& j) {
  RankingRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.aspect = j.at("aspect").get<std::string>();
  r.ranks = j.at("ranks").get<std::map<std::string, int>>();
  r.rater_id = j.value("rater_id", std::string());
  return r;
}

std::map<std::string, MeanRank> mean_ranks(std::span<const RankingRecord> records, std::vector<std::string>* rejected) {
  std::map<std::string, long> sums;
  std::map<std::string, MeanRank> out;
  for (const auto& rec : records) {
    if (auto reason = validate_ranking(rec)) {
      if (rejected) rejected->push_back(rec.instance_id + ": " + *reason);
      continue;
    }
    for (const auto& [tag, rank] : rec.ranks) {
      sums[tag] += rank;
      auto& m = out[tag];
      ++m.count;
      m.ranks.push_back(rank);
    }
  }
  for (auto& [tag, m] : out) m.mean = static_cast<double>(sums[tag]) / static_cast<double>(m.count);
  return out;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  // Continued fraction converges fastest for x < (a+1)/(a+b+2); use symmetry otherwise.
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 500; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_front) * f / a;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0)) throw std::invalid_argument("degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

double student_t_critical(double level, double df) {
  if (!(level > 0 && level < 1)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  const double target = 0.5 + level / 2.0;
  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, df) < target) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, df) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

void require_samples(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test needs at least two observations per sample");
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double variance_of(std::span<const double> v, double mean) {
  double s = 0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

TTestResult finish(double diff, double se, double df) {
  TTestResult r;
  r.df = df;
  if (se == 0.0) {
    // Both samples constant: equal means are indistinguishable, otherwise infinitely significant.
    r.t = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    r.p_two_sided = diff == 0.0 ? 1.0 : std::numeric_limits<double>::min();
    return r;
  }
  r.t = diff / se;
  r.p_two_sided = std::min(1.0, incomplete_beta(df / 2.0, 0.5, df / (df + r.t * r.t)));
  if (r.p_two_sided <= 0.0) r.p_two_sided = std::numeric_limits<double>::min();
  return r;
}

}  // namespace

TTestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  require_samples(a, b);
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = variance_of(a, ma) / static_cast<double>(a.size());
  const double vb = variance_of(b, mb) / static_cast<double>(b.size());
  const double se = std::sqrt(va + vb);
  double df = static_cast<double>(a.size() + b.size() - 2);
  if (va + vb > 0)
    df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  return finish(ma - mb, se, df);
}

TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  require_samples(a, b);
  if (a.size() != b.size()) throw std::invalid_argument("paired t-test needs equally sized samples");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double md = mean_of(d);
  const double se = std::sqrt(variance_of(d, md) / static_cast<double>(d.size()));
  return finish(md, se, static_cast<double>(d.size() - 1));
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

MeanCi mean_confidence_interval(std::span<const double> values, double level) {
  if (values.empty()) throw std::invalid_argument("confidence interval of an empty sample");
  MeanCi ci;
  ci.mean = mean_of(values);
  if (values.size() < 2) {
    ci.lo = ci.hi = ci.mean;
    return ci;
  }
  const double se = std::sqrt(variance_of(values, ci.mean) / static_cast<double>(values.size()));
  const double t = student_t_critical(level, static_cast<double>(values.size() - 1));
  ci.lo = ci.mean - t * se;
  ci.hi = ci.mean + t * se;
  return ci;
}

Json questionnaire_to_json(const QuestionnaireResponse& r) {
  Json picks = Json::object();
  for (const auto& [aspect, ml] : r.picks) picks[aspect] = Json{{"most", ml.first}, {"least", ml.second}};
  return Json{{"respondent", r.respondent}, {"inspiring", r.inspiring}, {"picks", picks}};
}

QuestionnaireResponse questionnaire_from_json(const Json& j) {
  QuestionnaireResponse r;
  r.respondent = j.value("respondent", std::string());
  r.inspiring = j.value("inspiring", std::set<std::string>());
  for (const auto& [aspect, ml] : j.at("picks").items())
    r.picks[aspect] = {ml.at("most").get<std::string>(), ml.at("least").get<std::string>()};
  return r;
}

std::map<std::string, ModelQuestionnaire> questionnaire_scores(std::span<const QuestionnaireResponse> responses,
                                                               std::span<const std::string> models,
                                                               std::vector<std::string>* rejected) {
  const std::set<std::string> known(models.begin(), models.end());
  std::map<std::string, long> inspiring;
  std::map<std::string, std::map<std::string, std::pair<long, long>>> votes;
  long valid = 0;
  for (const auto& r : responses) {
    std::optional<std::string> reason;
    for (const auto& m : r.inspiring)
      if (!known.count(m)) reason = "unknown model '" + m + "' in inspiring";
    for (const auto& aspect : kQuestionnaireAspects) {
      auto it = r.picks.find(aspect);
      if (it == r.picks.end()) {
        reason = "missing aspect " + aspect;
        continue;
      }
      for (const auto* m : {&it->second.first, &it->second.second})
        if (!known.count(*m)) reason = "unknown model '" + *m + "' for " + aspect;
    }
    if (reason) {
      if (rejected) rejected->push_back(r.respondent + ": " + *reason);
      continue;
    }
    ++valid;
    for (const auto& m : r.inspiring) ++inspiring[m];
    for (const auto& aspect : kQuestionnaireAspects) {
      const auto& [most, least] = r.picks.at(aspect);
      ++votes[aspect][most].first;
      ++votes[aspect][least].second;
    }
  }
  std::map<std::string, ModelQuestionnaire> out;
  const double n = valid > 0 ? static_cast<double>(valid) : 1.0;
  for (const auto& m : models) {
    ModelQuestionnaire q;
    q.inspiring = static_cast<double>(inspiring[m]) / n;
    for (const auto& aspect : kQuestionnaireAspects) {
      const auto [most, least] = votes[aspect][m];
      AspectScore s{static_cast<double>(most) / n, static_cast<double>(least) / n, 0.0};
      s.overall = s.most - s.least;
      q.aspects[aspect] = s;
    }
    out[m] = q;
  }
  return out;
}

}  // namespace plotcast
