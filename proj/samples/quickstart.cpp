#include <cstdio>

#include "sonnet/commands.hpp"

using namespace sonnet;

int main() {
  SynthOptions so;
  so.kind = "leading-indicator";
  so.N = 1200;
  so.lead = 4;
  const SeriesTable raw = synthesize(so);

  const Range train_rows{0, 800}, val_rows{800, 1000}, test_rows{1000, raw.rows()};
  const ZScoreParams z = zscore_fit(raw, train_rows);
  const SeriesTable norm = zscore_apply(raw, z);

  const WindowSpec spec{16, 4, 0};
  TrainData data{&norm, spec, make_windows(norm.rows(), spec, train_rows).anchors,
                 make_windows(norm.rows(), spec, val_rows).anchors};

  ModelConfig mc;
  mc.L = spec.L;
  mc.H = spec.H;
  mc.C = raw.channels();
  mc.d = 32;
  mc.K = 8;
  mc.alpha = 0.5;
  mc.validate();

  TrainConfig tc;
  tc.max_epochs = 15;
  tc.patience = 5;
  tc.lr = 2e-3;

  SonnetModel<float> model(mc);
  auto st = fresh_state(model, tc);
  const auto history = train(model, data, tc, st, [](const SonnetModel<float>&, const TrainState<float>& s) {
    const auto& r = s.history.rows.back();
    std::printf("epoch %2zu  train %.5f  val %.5f\n", r.epoch, r.train_loss, r.val_loss);
  });
  std::printf("best epoch %zu (%s), %zu parameters\n", history.best_epoch, history.stop_reason.c_str(),
              model.parameter_count());

  const auto anchors = make_windows(norm.rows(), spec, test_rows).anchors;
  const auto batch = make_batch<float>(norm, spec, anchors);
  Tape<float> tape(false);
  const auto out = model.forward(tape, batch.X, batch.y).value();
  std::vector<double> truth, pred, naive;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    truth.push_back(raw.target[anchors[i] + spec.H]);
    pred.push_back(z.target.invert(out[i * spec.H + spec.H - 1]));
    naive.push_back(raw.target[anchors[i]]);
  }
  std::printf("test target-step MAE %.4f, persistence %.4f\n", mae(truth, pred), mae(truth, naive));
  return 0;
}
