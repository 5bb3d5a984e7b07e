/*
 *  Copyright 2026 The slacast Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "slacast/models.hpp"

namespace slacast {
namespace {

ModelConfig small(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.height = 8;
  c.width = 8;
  c.lstm_units = 6;
  c.lstm_layers = 2;
  c.conv_filters = 4;
  c.convlstm_units = 3;
  c.seq_len = 3;
  c.dropout = 0.0;
  return c;
}

GridSeries toy(std::size_t months, bool land = true) {
  SynthOptions o;
  o.height = 8;
  o.width = 8;
  o.months = months;
  o.land = land;
  o.noise = 0.01;
  return synth(o);
}

Model fitted(ModelKind kind, const GridSeries& s, std::uint64_t seed = 3) {
  Model m = Model::build(small(kind), seed);
  m.normalizer = Normalizer::fit(s);
  return m;
}

TEST(ParameterCount, ConvolutionalReference) {
  ModelConfig c;
  EXPECT_EQ(count_params(c), 229413u);
  c.height = 16;
  c.width = 48;
  EXPECT_EQ(count_params(c), 229413u);
}

TEST(ParameterCount, RecurrentReferenceRegion) {
  ModelConfig c;
  c.kind = ModelKind::lstm;
  c.height = 560;
  c.width = 304;
  EXPECT_EQ(count_params(c), 51314960u);
}

TEST(ParameterCount, BuiltModelsMatchFormula) {
  for (ModelKind k : {ModelKind::lstm, ModelKind::cnn_convlstm, ModelKind::seq_lstm,
                      ModelKind::seq_lstm_p}) {
    Model m = Model::build(small(k), 1);
    EXPECT_EQ(m.parameter_count(), count_params(small(k))) << to_string(k);
  }
  ModelConfig c;
  c.height = 32;
  c.width = 32;
  EXPECT_EQ(Model::build(c, 1).parameter_count(), 229413u);
}

TEST(ParameterCount, TinyRecurrentByHand) {
  ModelConfig c = small(ModelKind::lstm);
  c.height = 1;
  c.width = 4;
  c.lstm_units = 2;
  c.lstm_layers = 1;
  // 4·2·(4+2+1) + 2·4 + 4
  EXPECT_EQ(count_params(c), 68u);
}

TEST(ReceptiveField, ReferenceConfiguration) {
  const ReceptiveField rf = receptive_field(ModelConfig{});
  EXPECT_EQ(rf.cells, 24u);
  EXPECT_DOUBLE_EQ(rf.degrees, 6.0);
}

TEST(ReceptiveField, CompositionRule) {
  const std::vector<LayerGeometry> one{{3, 1}};
  const std::vector<LayerGeometry> two{{3, 1}, {3, 1}};
  const std::vector<LayerGeometry> pooled{{2, 2}, {3, 1}};
  EXPECT_EQ(receptive_field(one), 3u);
  EXPECT_EQ(receptive_field(two), 5u);
  EXPECT_EQ(receptive_field(pooled), 6u);
  EXPECT_THROW(receptive_field(small(ModelKind::lstm)), std::invalid_argument);
}

TEST(Config, IndivisibleGridNamesPadding) {
  ModelConfig c = small(ModelKind::cnn_convlstm);
  c.height = 10;
  try {
    c.validate();
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("to 12x8"), std::string::npos) << e.what();
  }
  c.kind = ModelKind::lstm;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, KindNames) {
  for (ModelKind k : {ModelKind::lstm, ModelKind::cnn_convlstm, ModelKind::seq_lstm,
                      ModelKind::seq_lstm_p}) {
    EXPECT_EQ(parse_model_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_model_kind("gru"), std::invalid_argument);
  EXPECT_TRUE(is_sequence_kind(ModelKind::seq_lstm_p));
  EXPECT_FALSE(is_sequence_kind(ModelKind::cnn_convlstm));
}

TEST(Forward, OneOutputFramePerInput) {
  const GridSeries s = toy(5);
  for (ModelKind k : {ModelKind::lstm, ModelKind::cnn_convlstm, ModelKind::seq_lstm}) {
    Model m = fitted(k, s);
    std::vector<Tensor> frames;
    for (std::size_t t = 0; t < 5; ++t) frames.push_back(frame_tensor(s, t, m.normalizer));
    const Tensor mask = mask_tensor(s);
    Model::Pass pass;
    pass.mask = &mask;
    const auto out = m.forward(frames, pass);
    ASSERT_EQ(out.size(), 5u);
    for (const auto& o : out) {
      EXPECT_EQ(o.shape(), (Shape{1, 8, 8}));
      EXPECT_TRUE(o.value().all_finite());
    }
  }
}

TEST(Forward, RejectsWrongFrameShape) {
  Model m = Model::build(small(ModelKind::lstm), 1);
  const std::vector<Tensor> frames{Tensor(Shape{1, 4, 4})};
  EXPECT_THROW(m.forward(frames, Model::Pass{}), std::invalid_argument);
}

TEST(Forward, TrainAndInferAgreeWithoutDropout) {
  const GridSeries s = toy(4);
  Model m = fitted(ModelKind::lstm, s);
  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < 4; ++t) frames.push_back(frame_tensor(s, t, m.normalizer));
  Rng rng(1);
  Model::Pass train;
  train.mode = layers::Mode::train;
  train.dropout_rng = &rng;
  const auto a = m.forward(frames, train);
  const auto b = m.forward(frames, Model::Pass{});
  for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(a[t].value(), b[t].value());
}

TEST(Forward, DropoutChangesTrainingOutputOnly) {
  const GridSeries s = toy(4);
  ModelConfig c = small(ModelKind::lstm);
  c.dropout = 0.5;
  Model m = Model::build(c, 2);
  m.normalizer = Normalizer::fit(s);
  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < 4; ++t) frames.push_back(frame_tensor(s, t, m.normalizer));
  Rng rng(1);
  Model::Pass train;
  train.mode = layers::Mode::train;
  train.dropout_rng = &rng;
  const auto a = m.forward(frames, train);
  const auto b = m.forward(frames, Model::Pass{});
  const auto c2 = m.forward(frames, Model::Pass{});
  EXPECT_FALSE(a[3].value() == b[3].value());
  EXPECT_EQ(b[3].value(), c2[3].value());
  train.dropout_rng = nullptr;
  EXPECT_THROW(m.forward(frames, train), std::invalid_argument);
}

TEST(Model, CloneIsIndependent) {
  Model a = Model::build(small(ModelKind::cnn_convlstm), 5);
  Model b = a.clone();
  EXPECT_EQ(a.snapshot(), b.snapshot());
  b.parameters()[0].var.mutable_value()[0] += 1.0;
  EXPECT_NE(a.snapshot()[0][0], b.snapshot()[0][0]);
}

TEST(Model, SeedDeterminesInitialisation) {
  EXPECT_EQ(Model::build(small(ModelKind::lstm), 9).snapshot(),
            Model::build(small(ModelKind::lstm), 9).snapshot());
  EXPECT_NE(Model::build(small(ModelKind::lstm), 9).snapshot(),
            Model::build(small(ModelKind::lstm), 10).snapshot());
}

TEST(Model, RestoreRejectsWrongShapes) {
  Model m = Model::build(small(ModelKind::lstm), 1);
  auto snap = m.snapshot();
  snap.pop_back();
  EXPECT_THROW(m.restore(snap), std::invalid_argument);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  for (ModelKind k : {ModelKind::lstm, ModelKind::cnn_convlstm, ModelKind::seq_lstm_p}) {
    Model m = fitted(k, toy(6), 7);
    m.normalizer.mean = 0.1234567890123;
    const auto bytes = encode_checkpoint(m).buffer();
    Model r = decode_checkpoint(io::ByteReader(bytes));
    EXPECT_EQ(r.config().kind, k);
    EXPECT_EQ(r.config().convlstm_units, 3u);
    EXPECT_EQ(r.normalizer.mean, m.normalizer.mean);
    EXPECT_EQ(r.normalizer.std, m.normalizer.std);
    EXPECT_EQ(r.snapshot(), m.snapshot());
    EXPECT_EQ(encode_checkpoint(r).buffer(), bytes);
  }
}

TEST(Checkpoint, CorruptionRejected) {
  Model m = fitted(ModelKind::lstm, toy(6));
  auto bytes = encode_checkpoint(m).buffer();
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(decode_checkpoint(io::ByteReader(bad)), io::FormatError);
  bad = bytes;
  bad.resize(bad.size() - 8);
  EXPECT_THROW(decode_checkpoint(io::ByteReader(bad)), io::FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(io::ByteReader(bad)), io::FormatError);
}

TEST(Checkpoint, KeyValueParser) {
  const auto kv = detail::parse_key_values("# note\na=1\n\nb=x=y\n");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "x=y");
  EXPECT_THROW(detail::parse_key_values("novalue\n"), std::invalid_argument);
}

TEST(PredictNextMonth, DeterministicAndFillsLand) {
  const GridSeries s = toy(20);
  Model m = fitted(ModelKind::cnn_convlstm, s);
  const Forecast a = predict_next_month(m, s);
  const Forecast b = predict_next_month(m, s);
  EXPECT_TRUE(std::equal(a.fields.values().begin(), a.fields.values().end(),
                         b.fields.values().begin()));
  EXPECT_EQ(a.fields.epoch, s.epoch.plus(20));
  EXPECT_EQ(a.true_inputs.size(), 12u);
  EXPECT_EQ(a.true_inputs.front(), s.epoch.plus(8));
  a.fields.validate();
  for (std::size_t i = 0; i < s.cells(); ++i) {
    if (!s.ocean(i)) {
      EXPECT_EQ(a.fields.values()[i], static_cast<double>(kFillValue));
    }
  }
}

TEST(PredictNextMonth, WarmupOnlyUsesRecentHistory) {
  const GridSeries s = toy(20);
  Model m = fitted(ModelKind::lstm, s);
  const Forecast full = predict_next_month(m, s, 4);
  const Forecast tail = predict_next_month(m, s.slice_months(16, 4), 4);
  EXPECT_TRUE(std::equal(full.fields.values().begin(), full.fields.values().end(),
                         tail.fields.values().begin()));
  EXPECT_THROW(predict_next_month(fitted(ModelKind::seq_lstm, s), s), std::invalid_argument);
}

TEST(PredictSequence, ProvenanceAndWindowChecks) {
  const GridSeries s = toy(10);
  Model m = fitted(ModelKind::seq_lstm, s);
  const Forecast fc = predict_sequence(m, s.slice_months(2, 3));
  EXPECT_EQ(fc.fields.months(), 3u);
  EXPECT_EQ(fc.fields.epoch, s.epoch.plus(5));
  EXPECT_EQ(fc.true_inputs.size(), 3u);
  for (Feed f : fc.provenance) EXPECT_EQ(f, Feed::truth);
  EXPECT_THROW(predict_sequence(m, s.slice_months(0, 4)), std::invalid_argument);
  EXPECT_THROW(predict_sequence(fitted(ModelKind::lstm, s), s.slice_months(0, 3)),
               std::invalid_argument);
}

TEST(Rollout, FirstCycleEqualsSequenceForecast) {
  const GridSeries s = toy(10);
  Model m = fitted(ModelKind::seq_lstm_p, s);
  const GridSeries seed = s.slice_months(0, 3);
  const Forecast one = rollout_closed_loop(m, seed, 1);
  const Forecast seq = predict_sequence(m, seed);
  EXPECT_TRUE(std::equal(one.fields.values().begin(), one.fields.values().end(),
                         seq.fields.values().begin()));
  const Forecast many = rollout_closed_loop(m, seed, 4);
  EXPECT_EQ(many.fields.months(), 12u);
  EXPECT_TRUE(std::equal(one.fields.values().begin(), one.fields.values().end(),
                         many.fields.values().begin()));
  EXPECT_THROW(rollout_closed_loop(m, seed, 0), std::invalid_argument);
}

TEST(Rollout, OnlySeedMonthsAreTrue) {
  ModelConfig c = small(ModelKind::seq_lstm_p);
  c.seq_len = 9;
  const GridSeries s = toy(12);
  Model m = Model::build(c, 4);
  m.normalizer = Normalizer::fit(s);
  const Forecast fc = rollout_closed_loop(m, s.slice_months(0, 9), 20);
  EXPECT_EQ(fc.fields.months(), 180u);
  EXPECT_EQ(fc.true_inputs.size(), 9u);
  std::size_t truth = 0;
  for (Feed f : fc.provenance) truth += f == Feed::truth;
  EXPECT_EQ(truth, 9u);
  EXPECT_TRUE(std::all_of(fc.fields.values().begin(), fc.fields.values().end(),
                          [](double v) { return std::isfinite(v); }));
}

}  // namespace
}  // namespace slacast
