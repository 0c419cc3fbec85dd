#include "crd/losses.hpp"

#include <cmath>
#include <cstdio>

#include "crd/errors.hpp"

namespace crd {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw ValidationError(std::string(what) + " must be finite");
}

void validate(const DpoPairScores& p) {
  require_finite(p.policy_lp_w, "policy_lp_w");
  require_finite(p.policy_lp_l, "policy_lp_l");
  require_finite(p.ref_lp_w, "ref_lp_w");
  require_finite(p.ref_lp_l, "ref_lp_l");
  require_finite(p.beta, "beta");
  if (p.beta <= 0) throw ValidationError("beta must be > 0");
  if (p.policy_lp_w > 0 || p.policy_lp_l > 0 || p.ref_lp_w > 0 || p.ref_lp_l > 0)
    throw ValidationError("sequence log-probabilities must be <= 0");
}

}  // namespace

double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    carry += std::fabs(sum) >= std::fabs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + carry;
}

double batch_mean(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("batch_mean of an empty batch");
  return compensated_sum(values) / static_cast<double>(values.size());
}

double sft_loss(const SftSequence& seq) {
  if (seq.token_logprobs.empty()) throw ValidationError("sft_loss: empty sequence");
  for (double lp : seq.token_logprobs) {
    require_finite(lp, "token logprob");
    if (lp > 0) throw ValidationError("sft_loss: positive token logprob");
  }
  return -batch_mean(seq.token_logprobs);
}

double dpo_implicit_reward(double policy_lp, double ref_lp, double beta) {
  if (!(beta > 0)) throw ValidationError("beta must be > 0");
  return beta * (policy_lp - ref_lp);
}

double dpo_margin(const DpoPairScores& p) {
  // Grouping the differences before scaling keeps delta exactly 0 whenever
  // policy and reference scores coincide.
  return p.beta * ((p.policy_lp_w - p.ref_lp_w) - (p.policy_lp_l - p.ref_lp_l));
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

DpoLoss dpo_loss(const DpoPairScores& pair) {
  validate(pair);
  DpoLoss out;
  out.delta = dpo_margin(pair);
  out.loss = softplus(-out.delta);
  out.margin_prob = sigmoid(out.delta);
  return out;
}

DpoGrad dpo_grad(const DpoPairScores& pair) {
  validate(pair);
  const double g = pair.beta * sigmoid(-dpo_margin(pair));
  return {-g, g};
}

LossFixtureRow loss_fixture_row_from_json(const json& j, double default_beta) {
  LossFixtureRow row;
  row.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  row.kind = j.value("kind", std::string("dpo"));
  if (row.kind == "dpo") {
    row.dpo = {j.at("policy_lp_w").get<double>(), j.at("policy_lp_l").get<double>(), j.at("ref_lp_w").get<double>(),
               j.at("ref_lp_l").get<double>(), j.value("beta", default_beta)};
    validate(row.dpo);
  } else if (row.kind == "sft") {
    row.sft.token_logprobs = j.at("token_logprobs").get<std::vector<double>>();
  } else {
    throw ParseError("unknown loss fixture kind '" + row.kind + "'");
  }
  return row;
}

std::vector<LossFixtureRow> load_loss_fixture(const std::filesystem::path& path, double default_beta) {
  std::vector<LossFixtureRow> rows;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      rows.push_back(loss_fixture_row_from_json(j, default_beta));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return rows;
}

json loss_check_record(const LossFixtureRow& row) {
  if (row.kind == "sft") {
    return {{"id", row.id}, {"kind", "sft"}, {"loss", sft_loss(row.sft)},
            {"tokens", row.sft.token_logprobs.size()}};
  }
  const DpoLoss l = dpo_loss(row.dpo);
  const DpoGrad g = dpo_grad(row.dpo);
  return {{"id", row.id}, {"kind", "dpo"}, {"loss", l.loss}, {"margin_prob", l.margin_prob}, {"delta", l.delta},
          {"beta", row.dpo.beta}, {"grad_policy_lp_w", g.policy_lp_w}, {"grad_policy_lp_l", g.policy_lp_l}};
}

std::string render_loss_table(std::span<const json> records, std::size_t max_rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %-4s %22s %12s %12s %14s %14s\n", "id", "kind", "loss", "delta",
                "margin_prob", "grad_w", "grad_l");
  out += buf;
  std::size_t shown = 0;
  for (const auto& r : records) {
    if (shown++ == max_rows) {
      out += "... (" + std::to_string(records.size() - max_rows) + " more rows)\n";
      break;
    }
    const std::string id = r.at("id").get<std::string>();
    if (r.at("kind") == "sft") {
      std::snprintf(buf, sizeof buf, "%-16.16s %-4s %22.15g\n", id.c_str(), "sft", r.at("loss").get<double>());
    } else {
      std::snprintf(buf, sizeof buf, "%-16.16s %-4s %22.15g %12.6g %12.6g %14.6g %14.6g\n", id.c_str(), "dpo",
                    r.at("loss").get<double>(), r.at("delta").get<double>(), r.at("margin_prob").get<double>(),
                    r.at("grad_policy_lp_w").get<double>(), r.at("grad_policy_lp_l").get<double>());
    }
    out += buf;
  }
  return out;
}

}  // namespace crd
