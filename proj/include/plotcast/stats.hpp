#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "plotcast/jsonl.hpp"

namespace plotcast {

struct RankingRecord {
  std::string instance_id;
  std::string aspect;                // "consistency" or "storiability"
  std::map<std::string, int> ranks;  // model tag -> rank, 1 = best
  std::string rater_id;
};

/// Empty when valid, otherwise the reason (duplicate, missing or out-of-range rank).
std::optional<std::string> validate_ranking(const RankingRecord& record);
Json ranking_to_json(const RankingRecord& record);
RankingRecord ranking_from_json(const Json& j);

struct MeanRank {
  double mean = 0.0;
  long count = 0;
  std::vector<int> ranks;
};

/// Per-model mean rank over valid records; invalid records are skipped and
/// reported through `rejected` when given.
std::map<std::string, MeanRank> mean_ranks(std::span<const RankingRecord> records,
                                           std::vector<std::string>* rejected = nullptr);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
/// Two-sided quantile: the t with P(|T| <= t) = level.
double student_t_critical(double level, double df);

TTestResult welch_ttest(std::span<const double> a, std::span<const double> b);
TTestResult paired_ttest(std::span<const double> a, std::span<const double> b);

/// "***" below 0.001, "**" below 0.01, "*" below 0.05, else "".
std::string significance_stars(double p);

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Student-t confidence interval of the mean.
MeanCi mean_confidence_interval(std::span<const double> values, double level = 0.95);

struct QuestionnaireResponse {
  std::string respondent;
  std::set<std::string> inspiring;
  std::map<std::string, std::pair<std::string, std::string>> picks;  // aspect -> (most, least)
};

struct AspectScore {
  double most = 0.0;
  double least = 0.0;
  double overall = 0.0;
};

struct ModelQuestionnaire {
  double inspiring = 0.0;
  std::map<std::string, AspectScore> aspects;
};

inline const std::vector<std::string> kQuestionnaireAspects = {"helpfulness", "readability", "creativity"};

Json questionnaire_to_json(const QuestionnaireResponse& r);
QuestionnaireResponse questionnaire_from_json(const Json& j);

/// Shares over valid responses; Overall = Most - Least. Responses naming a
/// model outside `models` are rejected.
std::map<std::string, ModelQuestionnaire> questionnaire_scores(std::span<const QuestionnaireResponse> responses,
                                                               std::span<const std::string> models,
                                                               std::vector<std::string>* rejected = nullptr);

}  // namespace plotcast
