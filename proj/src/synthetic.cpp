#include "cxr/synthetic.hpp"

#include <cstdio>

#include "cxr/random.hpp"

namespace cxr {

namespace {

void add_rows(const SyntheticSpec& spec, Split split, std::size_t per_class, Rng& rng,
              FeatureMatrix& m, std::vector<ImageRecord>& records) {
  const char* split_dir = split == Split::Train ? "train" : "test";
  for (Label label : {Label::Covid, Label::NonCovid}) {
    const double mean = label == Label::Covid ? spec.offset : -spec.offset;
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[96];
      std::snprintf(name, sizeof name, "synthetic/%s/%s_%04zu.png", split_dir,
                    label == Label::Covid ? "covid" : "negative", i);
      for (std::size_t j = 0; j < spec.dim; ++j) m.data.push_back(static_cast<float>(mean + rng.normal()));
      m.row_ids.emplace_back(name);

      ImageRecord r;
      r.image_path = name;
      r.patient_id = std::string(split_dir) + "-" + (label == Label::Covid ? "c" : "n") + std::to_string(i);
      r.label = label;
      r.split = split;
      if (label == Label::Covid) {
        r.subgroup = Subgroup::Covid;
        r.source = Source::CovidCorpus;
      } else {
        r.subgroup = i % 2 == 0 ? Subgroup::Normal : Subgroup::OtherDisease;
        r.source = Source::NegativeCorpus;
      }
      records.push_back(std::move(r));
    }
  }
  m.rows = m.row_ids.size();
}

}  // namespace

SyntheticFixture make_synthetic_fixture(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  SyntheticFixture f;
  std::vector<ImageRecord> records;
  for (FeatureMatrix* m : {&f.train, &f.test}) {
    m->cols = spec.dim;
    m->backbone = Backbone::Synthetic;
    m->preprocessing_hash = Digest{};
  }
  add_rows(spec, Split::Train, spec.train_per_class, rng, f.train, records);
  add_rows(spec, Split::Test, spec.test_per_class, rng, f.test, records);
  f.manifest = make_manifest(std::move(records));
  return f;
}

}  // namespace cxr
