// Builds one synthetic sample with a nucleus inside a CK stain and a second
// nucleus under a CD45 leukocyte marker, then runs the classical pipeline.

#include <iostream>

#include "ctcpipe/ctcpipe.hpp"

int main() {
  ctc::synth::SceneSpec spec;
  spec.sample_id = "demo";
  spec.width = 160;
  spec.height = 120;
  spec.ck_blobs = {{50, 60, 24, 160}, {115, 60, 24, 160}};
  ctc::synth::DapiBlob ctc_nucleus;
  ctc_nucleus.cx = 50;
  ctc_nucleus.cy = 60;
  ctc_nucleus.radius = 7;
  ctc_nucleus.planted_ck_overlap = 1.0;
  ctc::synth::DapiBlob leukocyte = ctc_nucleus;
  leukocyte.cx = 115;
  leukocyte.planted_cd45_overlap = 0.6;
  spec.dapi_blobs = {ctc_nucleus, leukocyte};
  spec.noise = {ctc::synth::NoiseKind::gaussian, 12};

  const auto scene = ctc::synth::generate(spec);

  ctc::PipelineConfig cfg;
  cfg.crop_padding = 16;
  ctc::DetectorBinding stage1;
  stage1.stage = ctc::Stage::stage1_ck;
  ctc::DetectorBinding stage2;
  stage2.stage = ctc::Stage::stage2_dapi;
  const ctc::Pipeline pipeline(stage1, stage2, cfg);
  const auto result = pipeline.run_sample(scene.channels);

  std::cout << "outcome " << ctc::to_string(result.outcome) << ", sample positive " << std::boolalpha
            << result.sample_positive << "\n";
  for (const auto& v : result.verdicts) {
    std::cout << "  " << v.candidate_id << " at (" << v.bbox.x << "," << v.bbox.y << ")"
              << (v.is_ctc ? "  CTC" : "  not CTC") << "  p(CK|C)=" << v.p_ck_given_c()
              << "  p(CD45|C)=" << v.p_cd45_given_c() << "  confidence=" << v.breakdown.confidence << "\n";
  }
  std::cout << "ground truth:";
  for (const auto& c : scene.truth.candidates) {
    std::cout << " (" << c.cx2 / 2.0 << "," << c.cy2 / 2.0 << ")" << (c.is_ctc ? " CTC" : " not-CTC");
  }
  std::cout << "\n";
}
