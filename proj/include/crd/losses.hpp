#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crd/errors.hpp"
#include "crd/io.hpp"

namespace crd {

inline constexpr double kDefaultBeta = 0.1;

// Per-token log-probabilities of one target sequence; every entry is <= 0.
struct SftSequence {
  std::vector<double> token_logprobs;
};

// Summed sequence log-probabilities under the policy and the frozen
// reference, for the preferred (w) and dispreferred (l) responses.
struct DpoPairScores {
  double policy_lp_w = 0.0;
  double policy_lp_l = 0.0;
  double ref_lp_w = 0.0;
  double ref_lp_l = 0.0;
  double beta = kDefaultBeta;
};

// Neumaier-compensated sum and mean.
double compensated_sum(std::span<const double> values);
double batch_mean(std::span<const double> values);

// -(1/T) * sum of token log-probabilities.
double sft_loss(const SftSequence& seq);

double dpo_implicit_reward(double policy_lp, double ref_lp, double beta);

// Delta = r_w - r_l.
double dpo_margin(const DpoPairScores& pair);

struct DpoLoss {
  double loss = 0.0;         // softplus(-delta) = -log sigmoid(delta)
  double margin_prob = 0.0;  // sigmoid(delta)
  double delta = 0.0;
};
DpoLoss dpo_loss(const DpoPairScores& pair);

// Gradients with respect to the policy scores; reference terms are frozen.
struct DpoGrad {
  double policy_lp_w = 0.0;
  double policy_lp_l = 0.0;
};
DpoGrad dpo_grad(const DpoPairScores& pair);

double softplus(double x);
double sigmoid(double x);

// --- fixture files --------------------------------------------------------

// Line format: {"id", "kind": "dpo", policy_lp_w, policy_lp_l, ref_lp_w,
// ref_lp_l, beta?} or {"id", "kind": "sft", "token_logprobs": [...]}.
struct LossFixtureRow {
  std::string id;
  std::string kind;
  DpoPairScores dpo;
  SftSequence sft;
};

LossFixtureRow loss_fixture_row_from_json(const json& j, double default_beta = kDefaultBeta);
std::vector<LossFixtureRow> load_loss_fixture(const std::filesystem::path& path, double default_beta = kDefaultBeta);

// One output record per row: loss plus, for dpo rows, delta, margin_prob and
// both policy gradients.
json loss_check_record(const LossFixtureRow& row);
std::string render_loss_table(std::span<const json> records, std::size_t max_rows = 20);

}  // namespace crd
