#include <doctest.h>

#include <cmath>
#include <memory>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "plotcast/evaluation.hpp"
#include "plotcast/metrics.hpp"
#include "plotcast/stats.hpp"

using namespace plotcast;

namespace {

Tokens words(const std::string& s) { return tokenize(s); }

std::string n_words(int n, const std::string& w = "word") {
  std::string s;
  for (int i = 0; i < n; ++i) s += (i ? " " : "") + w + std::to_string(i);
  return s + ".";
}

RankingRecord record(std::map<std::string, int> ranks, const std::string& aspect = "consistency") {
  return RankingRecord{"i", aspect, std::move(ranks), "r"};
}

}  // namespace

TEST_CASE("bleu clips repeated unigrams") {
  const std::vector<Tokens> hyp{words("the the the cat")}, ref{words("the cat sat down")};
  const auto c = ngram_precision(hyp, ref, 1);
  CHECK(c.clipped == 2);
  CHECK(c.total == 4);
}

TEST_CASE("bleu on a hand-counted pair") {
  const std::vector<Tokens> hyp{words("the cat sat on the mat")}, ref{words("the cat sat on a mat")};
  // precisions 5/6, 3/5, 2/4, 1/3; equal lengths so no brevity penalty
  CHECK(std::abs(bleu4(hyp, ref) - std::pow(5.0 / 6 * 3.0 / 5 * 2.0 / 4 * 1.0 / 3, 0.25)) < 1e-9);
}

TEST_CASE("bleu brevity penalty") {
  const std::vector<Tokens> hyp{words("the cat sat on")}, ref{words("the cat sat on the mat")};
  CHECK(std::abs(bleu4(hyp, ref) - std::exp(1.0 - 6.0 / 4.0)) < 1e-9);
}

TEST_CASE("bleu boundary cases") {
  const std::vector<Tokens> same{words("a wolf ran home tonight"), words("the river rose fast")};
  CHECK(bleu4(same, same) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<Tokens> hyp{words("alpha beta gamma delta")}, ref{words("one two three four")};
  CHECK(bleu4(hyp, ref) <= 1e-8);
  CHECK_THROWS(bleu4(hyp, same));
}

TEST_CASE("rouge-l on a hand-traced pair") {
  CHECK(std::abs(rouge_l(words("a b c d"), words("a c b d")) - 0.75) < 1e-9);
  CHECK(rouge_l(words("a b c"), words("a b c")) == doctest::Approx(1.0));
  CHECK(rouge_l(words("a b c"), words("x y z")) == 0.0);
  // R = 2/4, P = 2/2, beta = 1.2
  const double r = 0.5, p = 1.0, b2 = 1.44;
  CHECK(std::abs(rouge_l(words("a b"), words("a x b y")) - (1 + b2) * r * p / (r + b2 * p)) < 1e-12);
}

TEST_CASE("property: lcs agrees with brute-force enumeration") {
  Rng rng(1);
  const std::vector<std::string> alphabet{"a", "b", "c", "d"};
  for (int trial = 0; trial < 200; ++trial) {
    Tokens a, b;
    for (std::uint64_t i = 0, n = 1 + rng.below(9); i < n; ++i) a.push_back(alphabet[rng.below(4)]);
    for (std::uint64_t i = 0, n = 1 + rng.below(9); i < n; ++i) b.push_back(alphabet[rng.below(4)]);
    CHECK(lcs_length(a, b) == oracles::lcs_brute(a, b));
  }
}

TEST_CASE("property: bleu and rouge-l ignore consistent renaming") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    Tokens a, b, ra, rb;
    for (int i = 0; i < 8; ++i) a.push_back(std::string(1, static_cast<char>('a' + rng.below(5))));
    for (int i = 0; i < 8; ++i) b.push_back(std::string(1, static_cast<char>('a' + rng.below(5))));
    for (const auto& t : a) ra.push_back("z" + t + "q");
    for (const auto& t : b) rb.push_back("z" + t + "q");
    CHECK(rouge_l(a, b) == rouge_l(ra, rb));
    CHECK(bleu4(std::vector<Tokens>{a}, std::vector<Tokens>{b}) == bleu4(std::vector<Tokens>{ra}, std::vector<Tokens>{rb}));
  }
}

TEST_CASE("meteor formula traces") {
  const auto id = meteor_detail(words("the wolf ran home"), words("the wolf ran home"));
  CHECK(id.chunks == 1);
  CHECK(id.matches == 4);
  CHECK(std::abs(id.score - (1.0 - 0.5 * std::pow(1.0 / 4, 3))) < 1e-9);

  const auto scrambled = meteor_detail(words("d c b a"), words("a b c d"));
  CHECK(scrambled.chunks == 4);
  CHECK(std::abs(scrambled.penalty - 0.5) < 1e-12);
  CHECK(std::abs(scrambled.score - 0.5) < 1e-9);

  CHECK(meteor_lite(words("alpha beta"), words("gamma delta")) == 0.0);

  // stem stage: "walked" aligns with "walk"; P = 2/3, R = 2/2, two chunks
  const auto st = meteor_detail(words("wolves walked home"), words("walk home"));
  CHECK(st.matches == 2);
  const double P = 2.0 / 3, R = 1.0, f = 10 * P * R / (R + 9 * P);
  CHECK(std::abs(st.score - f * (1 - 0.5 * std::pow(st.chunks / 2.0, 3))) < 1e-12);
}

TEST_CASE("embedding encoders") {
  const std::vector<StoryBlock> corpus{fixtures::block({"The wolf ran."}), fixtures::block({"A river rose."}),
                                       fixtures::block({"Bread burned."})};
  const TfidfBagEncoder bag(WordIdf::fit(corpus));
  CHECK(embed_cosine("The wolf ran.", "The wolf ran.", bag) == doctest::Approx(1.0));
  CHECK(embed_cosine("wolf", "river", bag) == 0.0);
  CHECK(embed_cosine("the", "river", bag) == 0.0);

  const Vocab vocab(std::vector<std::string>{"wolf", "river", "dog"});
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(vocab.size(), 3);
  table(vocab.encode("wolf"), 0) = 1;
  table(vocab.encode("river"), 1) = 1;
  table(vocab.encode("dog"), 0) = 1;
  table(vocab.encode("dog"), 2) = 1;
  auto emb = std::make_shared<const TokenEmbeddings>(vocab, table);
  const EmbeddingMeanEncoder mean(emb);
  CHECK(embed_cosine("wolf", "river", mean) == 0.0);
  CHECK(embed_cosine("wolf", "dog", mean) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(embed_cosine("river river", "river", mean) == doctest::Approx(1.0));

  CHECK_THROWS_AS(make_encoder("skipthought", WordIdf{}, emb), ConfigError);
  CHECK(make_encoder("tfidf_bag", WordIdf{}, nullptr)->name() == "tfidf_bag");
}

TEST_CASE("coverage of a text against itself is complete") {
  const auto x = words("The lantern keeper walked to the river at dawn.");
  const auto c = coverage(x, x);
  CHECK(c.story_coverage == 1.0);
  CHECK(c.plot_coverage == 1.0);
}

TEST_CASE("coverage of a story quoting half the plot") {
  const auto plot = words("lantern river wolf harvest storm bread judge crown");
  const auto story = words("The lantern by the river and a wolf in the storm.");
  const auto c = coverage(story, plot);
  CHECK(std::abs(c.plot_coverage - 0.5) < 1e-9);
  CHECK(c.story_coverage == doctest::Approx(1.0));
  CHECK(c.matched == 4);
}

TEST_CASE("coverage with disjoint words and empty inputs") {
  const auto c = coverage(words("wolf river"), words("bread crown"));
  CHECK(c.story_coverage == 0.0);
  CHECK(c.plot_coverage == 0.0);
  const auto e = coverage(words("the and of"), words("bread"));
  CHECK(e.empty_input);
  CHECK(e.plot_coverage == 0.0);
}

TEST_CASE("coverage counts one matched pair from both sides") {
  Rng rng(3);
  const std::vector<std::string> pool{"wolf", "river", "bread", "crown", "storm", "judge", "fever"};
  for (int trial = 0; trial < 50; ++trial) {
    Tokens a, b;
    for (std::uint64_t i = 0, n = 1 + rng.below(8); i < n; ++i) a.push_back(pool[rng.below(pool.size())]);
    for (std::uint64_t i = 0, n = 1 + rng.below(8); i < n; ++i) b.push_back(pool[rng.below(pool.size())]);
    const auto c = coverage(a, b);
    CHECK(std::lround(c.story_coverage * c.story_tokens) == c.matched);
    CHECK(std::lround(c.plot_coverage * c.plot_tokens) == c.matched);
  }
}

TEST_CASE("embedding similarity above the threshold aligns different words") {
  const Vocab vocab(std::vector<std::string>{"wolf", "hound", "bread"});
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(vocab.size(), 2);
  table(vocab.encode("wolf"), 0) = 1;
  table(vocab.encode("hound"), 0) = 0.9;
  table(vocab.encode("hound"), 1) = 0.1;
  table(vocab.encode("bread"), 1) = 1;
  const TokenEmbeddings emb(vocab, table);
  CoverageOptions opt;
  opt.embeddings = &emb;
  CHECK(coverage(words("wolf"), words("hound"), opt).matched == 1);
  CHECK(coverage(words("wolf"), words("bread"), opt).matched == 0);
  CHECK(coverage(words("wolf"), words("hound")).matched == 0);
}

TEST_CASE("mean ranks") {
  std::vector<RankingRecord> all_first;
  for (int i = 0; i < 5; ++i) all_first.push_back(record({{"GT", 1}, {"RH", 2}, {"RF", 3}, {"PW", 4}, {"FGPT2", 5}, {"LLM", 6}}));
  CHECK(mean_ranks(all_first).at("GT").mean == 1.0);

  const std::vector<RankingRecord> two{record({{"GT", 2}, {"RH", 1}, {"RF", 3}, {"PW", 4}}),
                                       record({{"GT", 4}, {"RH", 1}, {"RF", 2}, {"PW", 3}})};
  CHECK(mean_ranks(two).at("GT").mean == 3.0);
}

TEST_CASE("synthetic records reproduce the published ground-truth mean") {
  std::vector<RankingRecord> recs;
  for (int i = 0; i < 1000; ++i) {
    if (i < 909)
      recs.push_back(record({{"GT", 3}, {"RH", 1}, {"RF", 2}, {"PW", 4}, {"FGPT2", 5}}));
    else
      recs.push_back(record({{"GT", 4}, {"RH", 1}, {"RF", 2}, {"PW", 3}, {"FGPT2", 5}}));
  }
  CHECK(std::abs(mean_ranks(recs).at("GT").mean - 3.091) < 1e-12);
}

TEST_CASE("property: model means average to (k + 1) / 2") {
  Rng rng(4);
  const std::vector<std::string> tags{"GT", "RH", "RF", "PW", "FGPT2", "LLM"};
  std::vector<RankingRecord> recs;
  for (int i = 0; i < 200; ++i) {
    std::vector<int> perm{1, 2, 3, 4, 5, 6};
    rng.shuffle(std::span<int>(perm));
    std::map<std::string, int> ranks;
    for (std::size_t k = 0; k < tags.size(); ++k) ranks[tags[k]] = perm[k];
    recs.push_back(record(ranks));
  }
  double sum = 0;
  for (const auto& [tag, m] : mean_ranks(recs)) sum += m.mean;
  CHECK(sum / 6 == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("malformed permutations are rejected with a reason") {
  CHECK(validate_ranking(record({{"GT", 1}, {"RH", 1}, {"RF", 2}})).has_value());
  CHECK(validate_ranking(record({{"GT", 1}, {"RH", 3}})).has_value());
  CHECK(validate_ranking(record({{"GT", 1}, {"XYZ", 2}})).has_value());
  CHECK(validate_ranking(record({{"GT", 1}, {"RH", 2}}, "fluency")).has_value());
  CHECK_FALSE(validate_ranking(record({{"GT", 2}, {"RH", 1}})).has_value());
  std::vector<std::string> rejected;
  const std::vector<RankingRecord> recs{record({{"GT", 1}, {"RH", 2}}), record({{"GT", 1}, {"RH", 1}})};
  const auto m = mean_ranks(recs, &rejected);
  CHECK(rejected.size() == 1);
  CHECK(m.at("GT").count == 1);
  const auto back = ranking_from_json(ranking_to_json(recs[0]));
  CHECK(back.ranks == recs[0].ranks);
}

TEST_CASE("welch t-test matches the reference oracle") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 3, 4, 5, 6};
  const auto r = welch_ttest(a, b);
  const auto o = oracles::welch(a, b);
  CHECK(r.t == doctest::Approx(-1.0));
  CHECK(r.df == doctest::Approx(8.0));
  CHECK(std::abs(r.p_two_sided - o.p) < 1e-3);
  CHECK(r.p_two_sided == doctest::Approx(0.347).epsilon(1e-3));

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x, y;
    for (std::uint64_t i = 0, n = 3 + rng.below(30); i < n; ++i) x.push_back(rng.normal());
    for (std::uint64_t i = 0, n = 3 + rng.below(30); i < n; ++i) y.push_back(rng.normal() * 2 + 0.5);
    const auto got = welch_ttest(x, y);
    const auto ref = oracles::welch(x, y);
    CHECK(std::abs(got.p_two_sided - ref.p) < 1e-3);
    const auto swapped = welch_ttest(y, x);
    CHECK(swapped.t == doctest::Approx(-got.t));
    CHECK(swapped.p_two_sided == doctest::Approx(got.p_two_sided));
    CHECK(got.p_two_sided > 0.0);
    CHECK(got.p_two_sided <= 1.0);
  }
}

TEST_CASE("t-test degenerate cases") {
  const std::vector<double> a{1, 2, 3}, c{2, 2, 2};
  CHECK(welch_ttest(a, a).t == 0.0);
  CHECK(welch_ttest(a, a).p_two_sided == 1.0);
  CHECK(welch_ttest(c, c).p_two_sided == 1.0);
  CHECK_THROWS(welch_ttest(std::vector<double>{1}, a));
  const auto paired = paired_ttest(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 3, 5, 5});
  // differences -1 -1 -2 -1: mean -1.25, sd 0.5, t = -1.25 / (0.5 / 2) = -5
  CHECK(paired.t == doctest::Approx(-5.0));
  CHECK(paired.df == 3.0);
  CHECK(std::abs(paired.p_two_sided - oracles::t_two_sided_p(-5.0, 3.0)) < 1e-6);
}

TEST_CASE("incomplete beta and t quantiles") {
  CHECK(incomplete_beta(1, 1, 0.3) == doctest::Approx(0.3));
  CHECK(incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(incomplete_beta(2, 3, 1.0) == 1.0);
  // I_x(2,1) = x^2
  CHECK(incomplete_beta(2, 1, 0.6) == doctest::Approx(0.36));
  CHECK(student_t_cdf(0, 5) == doctest::Approx(0.5));
  CHECK(student_t_critical(0.95, 1e6) == doctest::Approx(1.95996).epsilon(1e-4));
  const auto ci = mean_confidence_interval(std::vector<double>{1, 2, 3});
  CHECK(ci.mean == 2.0);
  CHECK(ci.hi - ci.mean == doctest::Approx(4.302653 / std::sqrt(3.0)).epsilon(1e-5));
}

TEST_CASE("significance stars and p-value formatting") {
  CHECK(significance_stars(0.0005) == "***");
  CHECK(significance_stars(0.001) == "**");
  CHECK(significance_stars(0.005) == "**");
  CHECK(significance_stars(0.01) == "*");
  CHECK(significance_stars(0.049) == "*");
  CHECK(significance_stars(0.05) == "");
  CHECK(format_p_value(0.0002) == "0.001***");
  CHECK(format_p_value(0.437) == ".437");
  CHECK(format_p_value(0.039) == ".039*");
  CHECK(format_p_value(0.003) == ".003**");
}

TEST_CASE("instance filter boundaries") {
  std::vector<std::string> sentences;
  for (int i = 0; i < 15; ++i) sentences.push_back(n_words(10, "w" + std::to_string(i) + "x"));
  EvalInstance in;
  in.context = fixtures::block(sentences, "b", 0, 1);
  in.next = fixtures::block(sentences, "b", 1, 1);
  in.reference.text = n_words(30);
  in.suggestions[ModelTag::FGPT2] = Suggestion{ModelTag::FGPT2, n_words(40), 40, {}};
  CHECK(in.context.word_count() == 150);
  CHECK_FALSE(filter_reason(in).has_value());

  auto short_plot = in;
  short_plot.suggestions[ModelTag::FGPT2].text = n_words(24);
  CHECK(filter_reason(short_plot).has_value());
  short_plot.suggestions[ModelTag::FGPT2].text = n_words(25);
  CHECK_FALSE(filter_reason(short_plot).has_value());
  short_plot.reference.text = n_words(66);
  CHECK(filter_reason(short_plot).has_value());

  auto straddle = in;
  straddle.next.chapter_id = 2;
  CHECK(filter_reason(straddle).value() == "blocks cross a chapter boundary");

  auto small = in;
  small.context.sentences.pop_back();
  CHECK(filter_reason(small).has_value());

  CHECK(filter_eval_instances({in, straddle, short_plot}).size() == 1);
}

TEST_CASE("questionnaire shares and overall scores") {
  std::vector<QuestionnaireResponse> rs;
  for (int i = 0; i < 17; ++i) {
    QuestionnaireResponse r;
    r.respondent = "w" + std::to_string(i);
    if (i < 11) r.inspiring.insert("LLM");
    r.picks["helpfulness"] = {i < 4 ? "GT" : "LLM", "FGPT2"};
    r.picks["readability"] = {"LLM", "FGPT2"};
    r.picks["creativity"] = {"LLM", "FGPT2"};
    rs.push_back(r);
  }
  const std::vector<std::string> models{"GT", "FGPT2", "LLM", "PW"};
  const auto s = questionnaire_scores(rs, models);
  CHECK(s.at("LLM").inspiring == doctest::Approx(0.647).epsilon(1e-3));
  CHECK(s.at("GT").aspects.at("helpfulness").most == doctest::Approx(0.235).epsilon(1e-3));
  CHECK(s.at("GT").aspects.at("helpfulness").least == 0.0);
  CHECK(s.at("GT").aspects.at("helpfulness").overall == doctest::Approx(0.235).epsilon(1e-3));
  CHECK(s.at("PW").aspects.at("creativity").overall == 0.0);
  CHECK(s.at("PW").inspiring == 0.0);

  auto bad = rs;
  bad[0].inspiring.insert("XYZ");
  std::vector<std::string> rejected;
  questionnaire_scores(bad, models, &rejected);
  CHECK(rejected.size() == 1);
  CHECK(questionnaire_from_json(questionnaire_to_json(rs[0])).picks == rs[0].picks);
}

TEST_CASE("metric table keeps the published row and column layout") {
  MetricReport report;
  report.encoder = "tfidf_bag";
  for (auto t : {ModelTag::RH, ModelTag::RF, ModelTag::PW, ModelTag::FGPT2})
    report.models[t] = ModelMetrics{0.0012, 0.0868, 0.1663, 0.6101, 10};
  const std::vector<ModelTag> models{ModelTag::RH, ModelTag::RF, ModelTag::PW, ModelTag::FGPT2};
  const auto cells = fixtures::table_cells(render_metric_table(report, models, {true}));
  REQUIRE(cells.size() == 6);
  CHECK(cells[0] == std::vector<std::string>{"", "BLEU-4", "METEOR", "ROUGE-L", "TFIDF-COS"});
  const std::vector<std::string> rows{"Rand-History", "Rand-Future", "Fusion-Seq", "P&W", "FGPT-2"};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    CHECK(cells[r + 1].size() == 5);
    CHECK(cells[r + 1][0] == rows[r]);
  }
  CHECK(cells[1][1] == ".0012");
  CHECK(fixtures::table_cells(render_metric_table(report, models)).size() == 5);
}

TEST_CASE("rank table keeps the published layout") {
  Rng rng(6);
  const std::vector<std::string> tags{"GT", "RH", "RF", "PW", "FGPT2"};
  std::vector<RankingRecord> recs;
  for (int i = 0; i < 100; ++i) {
    std::vector<int> perm{1, 2, 3, 4, 5};
    rng.shuffle(std::span<int>(perm));
    std::map<std::string, int> ranks;
    for (std::size_t k = 0; k < tags.size(); ++k) ranks[tags[k]] = perm[k];
    recs.push_back(record(ranks, i % 2 ? "storiability" : "consistency"));
  }
  const auto table = build_rank_table(recs, "consistency", TTestKind::welch, {true});
  CHECK(table.records == 50);
  const auto cells = fixtures::table_cells(render_rank_table(table));
  REQUIRE(cells.size() == 8);
  CHECK(cells[0] == std::vector<std::string>{"Consistency (lower is better)", "GT", "RH", "RF", "Fusion", "P&W", "FGPT-2"});
  CHECK(cells[1][0] == "Mean");
  CHECK(cells[1].size() == 7);
  CHECK(cells[1][4] == "n/a");
  CHECK(cells[2] == std::vector<std::string>{"P-values for T-test"});
  const std::vector<std::string> rows{"GT", "RH", "RF", "Fusion", "P&W"};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    CHECK(cells[r + 3].size() == 7);
    CHECK(cells[r + 3][0] == rows[r]);
    for (std::size_t c = 1; c <= r + 1; ++c) CHECK(cells[r + 3][c] == "-");
  }
  CHECK(rank_table_to_json(table).at("columns").size() == 6);
}

TEST_CASE("study analysis ranks an unrelated paragraph below the plot the story follows") {
  StudyRecord r;
  r.instance_id = "b:1";
  r.story = "The lantern keeper crossed the river with the wolf before the storm.";
  r.plots["GT"] = "A keeper carries a lantern across the river while a wolf follows and a storm gathers.";
  r.plots["Random"] = "Bread and cheese were served at the wedding feast with music and dancing all night.";
  const std::vector<StoryBlock> corpus{fixtures::block({r.story}), fixtures::block({r.plots["Random"]}),
                                       fixtures::block({"Something else."})};
  const TfidfBagEncoder enc(WordIdf::fit(corpus));
  const auto a = analyze_study(std::vector<StudyRecord>{r, r}, enc);
  CHECK(a.columns == std::vector<std::string>{"GT", "Random"});
  CHECK(a.similarity.at("GT") > a.similarity.at("Random"));
  CHECK(a.plot_coverage.at("GT").mean > a.plot_coverage.at("Random").mean);
  CHECK(fixtures::table_cells(render_similarity_table(a)).size() == 2);
  CHECK_FALSE(render_coverage_table(a).empty());
  CHECK(study_from_json(study_to_json(r)).plots == r.plots);
}

TEST_CASE("random paragraph pool respects the word band") {
  std::vector<std::string> sentences;
  for (int i = 0; i < 40; ++i) sentences.push_back(n_words(9, "s" + std::to_string(i) + "w"));
  const std::vector<StoryBlock> blocks{fixtures::block(sentences)};
  const auto pool = random_paragraph_pool(blocks);
  CHECK_FALSE(pool.empty());
  for (const auto& p : pool) {
    CHECK(word_count(p) >= 30);
    CHECK(word_count(p) <= 50);
  }
}
