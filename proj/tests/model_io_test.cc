#include "semloc/model_io.h"

#include <cstring>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "semloc/dataset.h"
#include "semloc/errors.h"
#include "semloc/synth.h"
#include "test_support.h"

namespace semloc {
namespace {

namespace fs = std::filesystem;
using testing::make_temp_dir;

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

void write_bytes(const fs::path& path, const std::string& magic, std::vector<std::uint32_t> header,
                 const std::vector<float>& values) {
  std::ofstream out(path, std::ios::binary);
  out.write(magic.data(), 4);
  for (std::uint32_t v : header) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  for (float f : values) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                static_cast<unsigned char>(u >> 16),
                                static_cast<unsigned char>(u >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

void write_pgm(const fs::path& path, int w, int h, const std::vector<std::uint8_t>& px) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

void write_minimal_model(const fs::path& dir, const std::string& points_line) {
  write_file(dir / "cameras.txt", "# camera list\n1 PINHOLE 640 480 500 500 320 240\n");
  write_file(dir / "images.txt",
             "1 1 0 0 0 0 0 0 1 a.jpg\n"
             "100 200 7\n"
             "2 1 0 0 0 -1 0 0 1 b.jpg\n"
             "110 200 7\n");
  write_file(dir / "points3D.txt", points_line);
}

TEST(LoadSfmModel, MinimalModelWithBidirectionalTrack) {
  const fs::path dir = make_temp_dir("model_min");
  write_minimal_model(dir, "7 0.5 0.2 5 128 128 128 0.1 1 0 2 0\n");
  const SfmModel model = load_sfm_model(dir);
  ASSERT_EQ(model.cameras.size(), 1u);
  ASSERT_EQ(model.images.size(), 2u);
  ASSERT_EQ(model.points.size(), 1u);
  const RawPoint3D& p = model.points.at(7);
  EXPECT_EQ(p.position, Eigen::Vector3d(0.5, 0.2, 5));
  ASSERT_EQ(p.track.size(), 2u);
  for (const TrackElement& el : p.track) {
    EXPECT_EQ(model.images.at(el.image_id).point3d_ids.at(el.point2d_idx), 7u);
  }
  EXPECT_EQ(model.images.at(2).pose().center(), Eigen::Vector3d(1, 0, 0));
}

TEST(LoadSfmModel, DanglingImageIdIsConsistencyError) {
  const fs::path dir = make_temp_dir("model_dangling");
  write_minimal_model(dir, "7 0.5 0.2 5 128 128 128 0.1 1 0 99 0\n");
  EXPECT_THROW(load_sfm_model(dir), ConsistencyError);
}

TEST(LoadSfmModel, MalformedLineReportsLineNumber) {
  const fs::path dir = make_temp_dir("model_malformed");
  write_minimal_model(dir, "# header\n7 0.5 oops 5 128 128 128 0.1 1 0 2 0\n");
  try {
    load_sfm_model(dir);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(LoadSfmModel, NonPinholeRejected) {
  const fs::path dir = make_temp_dir("model_cam");
  write_minimal_model(dir, "7 0.5 0.2 5 128 128 128 0.1 1 0 2 0\n");
  write_file(dir / "cameras.txt", "1 SIMPLE_RADIAL 640 480 500 320 240 0.1\n");
  EXPECT_THROW(load_sfm_model(dir), ParseError);
}

TEST(LoadSfmModel, ShortTrackRejected) {
  const fs::path dir = make_temp_dir("model_short");
  write_minimal_model(dir, "7 0.5 0.2 5 128 128 128 0.1 1 0\n");
  EXPECT_THROW(load_sfm_model(dir), ConsistencyError);
}

ClassTable twenty_classes() {
  ClassTable t;
  for (int i = 0; i < 20; ++i) {
    t.names.push_back("c" + std::to_string(i));
    t.dynamic.push_back(false);
  }
  return t;
}

TEST(LoadLabelRaster, UniformRasterHistogram) {
  const fs::path dir = make_temp_dir("raster");
  write_pgm(dir / "r.pgm", 4, 4, std::vector<std::uint8_t>(16, 2));
  const LabelRaster r = load_label_raster(dir / "r.pgm", 4, 4, twenty_classes());
  EXPECT_EQ(r.histogram(), (std::map<std::uint8_t, std::size_t>{{2, 16}}));
}

TEST(LoadLabelRaster, DimensionMismatch) {
  const fs::path dir = make_temp_dir("raster_dims");
  write_pgm(dir / "r.pgm", 640, 480, std::vector<std::uint8_t>(640 * 480, 0));
  EXPECT_THROW(load_label_raster(dir / "r.pgm", 1024, 1024, twenty_classes()), DimensionMismatch);
}

TEST(LoadLabelRaster, UnknownLabel) {
  const fs::path dir = make_temp_dir("raster_label");
  std::vector<std::uint8_t> px(16, 1);
  px[5] = 200;
  px[6] = 255;  // void is always allowed
  write_pgm(dir / "r.pgm", 4, 4, px);
  EXPECT_THROW(load_label_raster(dir / "r.pgm", 4, 4, twenty_classes()), UnknownLabel);
}

TEST(LoadLabelRaster, TruncatedPixels) {
  const fs::path dir = make_temp_dir("raster_trunc");
  write_pgm(dir / "r.pgm", 4, 4, std::vector<std::uint8_t>(10, 1));
  EXPECT_THROW(load_label_raster(dir / "r.pgm", 4, 4, twenty_classes()), TruncatedFile);
}

TEST(LabelRaster, NearestPixelBoundaries) {
  LabelRaster r(3, 2, 0);
  r.at(2, 1) = 5;
  EXPECT_EQ(r.nearest({2.49, 1.49}), std::optional<std::uint8_t>(5));
  EXPECT_EQ(r.nearest({1.5, 0.5}), std::optional<std::uint8_t>(5));
  EXPECT_EQ(r.nearest({1.49, 0.5}), std::optional<std::uint8_t>(0));
  EXPECT_FALSE(r.nearest({2.5, 1.0}).has_value());
  EXPECT_FALSE(r.nearest({-0.51, 0.0}).has_value());
  EXPECT_TRUE(r.nearest({-0.5, -0.5}).has_value());
}

TEST(LoadDescriptors, HeaderAndPayload) {
  const fs::path dir = make_temp_dir("ldsc");
  std::vector<float> values(12);
  for (int i = 0; i < 12; ++i) values[i] = static_cast<float>(i) * 0.5f;
  write_bytes(dir / "a.ldsc", "LDSC", {3, 4}, values);
  const DescriptorSet set = load_descriptors(dir / "a.ldsc");
  EXPECT_EQ(set.rows, 3u);
  EXPECT_EQ(set.dim, 4u);
  EXPECT_EQ(set.data, values);
  EXPECT_EQ(set.row(2)[1], 4.5f);
}

TEST(LoadDescriptors, TruncatedPayload) {
  const fs::path dir = make_temp_dir("ldsc_trunc");
  write_bytes(dir / "a.ldsc", "LDSC", {3, 4}, std::vector<float>(11, 1.0f));
  EXPECT_THROW(load_descriptors(dir / "a.ldsc"), TruncatedFile);
}

TEST(LoadDescriptors, BadMagic) {
  const fs::path dir = make_temp_dir("ldsc_magic");
  write_bytes(dir / "a.ldsc", "GDSC", {3, 4}, std::vector<float>(12, 1.0f));
  EXPECT_THROW(load_descriptors(dir / "a.ldsc"), BadMagic);
}

TEST(LoadDescriptors, TrailingBytesRejected) {
  const fs::path dir = make_temp_dir("ldsc_trailing");
  write_bytes(dir / "a.ldsc", "LDSC", {3, 4}, std::vector<float>(13, 1.0f));
  EXPECT_THROW(load_descriptors(dir / "a.ldsc"), ParseError);
}

TEST(LoadGlobalDescriptor, RenormalizedOnLoad) {
  const fs::path dir = make_temp_dir("gdsc");
  std::vector<float> v(8, 0.0f);
  v[0] = 3.0f;
  v[1] = 4.0f;
  write_bytes(dir / "g.gdsc", "GDSC", {8}, v);
  const GlobalDescriptor gd = load_global_descriptor(dir / "g.gdsc");
  ASSERT_EQ(gd.dim(), 8u);
  EXPECT_FLOAT_EQ(gd.values[0], 0.6f);
  EXPECT_FLOAT_EQ(gd.values[1], 0.8f);
  for (std::size_t i = 2; i < 8; ++i) EXPECT_EQ(gd.values[i], 0.0f);
}

TEST(LoadGlobalDescriptor, ZeroVectorRejected) {
  const fs::path dir = make_temp_dir("gdsc_zero");
  write_bytes(dir / "g.gdsc", "GDSC", {4}, std::vector<float>(4, 0.0f));
  EXPECT_THROW(load_global_descriptor(dir / "g.gdsc"), ParseError);
}

TEST(Keypoints, RoundTrip) {
  const fs::path dir = make_temp_dir("kpts");
  const std::vector<Eigen::Vector2d> kps = {{1.5, 2.25}, {639.75, 0.0}};
  write_keypoints(kps, dir / "k.kpts");
  EXPECT_EQ(load_keypoints(dir / "k.kpts"), kps);
}

TEST(ClassTable, RoundTripAndContiguity) {
  const fs::path dir = make_temp_dir("classes");
  const ClassTable table = ClassTable::cityscapes();
  write_class_table(table, dir / "classes.txt");
  EXPECT_EQ(load_class_table(dir / "classes.txt"), table);
  EXPECT_TRUE(table.is_dynamic(13));
  EXPECT_FALSE(table.is_dynamic(table.void_id));
  write_file(dir / "gap.txt", "0 road 0\n2 building 0\n");
  EXPECT_THROW(load_class_table(dir / "gap.txt"), ParseError);
}

TEST(Conditions, RejectsUnknownTag) {
  const fs::path dir = make_temp_dir("cond");
  write_file(dir / "c.txt", "a.jpg day\nb.jpg dusk\n");
  EXPECT_THROW(load_conditions(dir / "c.txt"), ParseError);
}

SceneSpec small_spec(std::uint64_t seed) {
  SceneSpec spec;
  spec.n_points = 100;
  spec.n_db_images = 8;
  spec.n_queries = 3;
  spec.pixel_noise = 0.5;
  spec.clutter_keypoints = 5;
  spec.seed = seed;
  return spec;
}

TEST(DatasetRoundTrip, SynthSceneReloadsFieldForField) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SyntheticScene scene = generate_scene(small_spec(seed));
    const fs::path dir = make_temp_dir("roundtrip");
    write_scene(scene, dir);
    const Dataset loaded = load_dataset(dir);
    EXPECT_EQ(loaded.model, scene.dataset.model) << "seed " << seed;
    EXPECT_EQ(loaded.classes, scene.dataset.classes);
    EXPECT_EQ(loaded.db_labels, scene.dataset.db_labels);
    EXPECT_EQ(loaded.db_descriptors, scene.dataset.db_descriptors);
    EXPECT_EQ(loaded.db_globals, scene.dataset.db_globals);
    EXPECT_EQ(loaded.queries, scene.dataset.queries);
    EXPECT_TRUE(loaded == scene.dataset);
  }
}

TEST(ValidateDataset, CompleteBundleIsOk) {
  const fs::path dir = make_temp_dir("validate_ok");
  write_scene(generate_scene(small_spec(4)), dir);
  const ValidationReport report = validate_dataset(dir);
  EXPECT_TRUE(report.ok);
  EXPECT_TRUE(report.findings.empty());
}

TEST(ValidateDataset, MissingRasterNamesTheImage) {
  const fs::path dir = make_temp_dir("validate_raster");
  write_scene(generate_scene(small_spec(5)), dir);
  fs::remove(DatasetLayout(dir).db_labels("db_0003"));
  const ValidationReport report = validate_dataset(dir);
  EXPECT_FALSE(report.ok);
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].subject, "db_0003");
  EXPECT_NE(report.findings[0].message.find("db_0003.labels.pgm"), std::string::npos);
  EXPECT_THROW(load_dataset(dir), Error);
}

TEST(ValidateDataset, DescriptorDimMismatchFlagsEachOffender) {
  SyntheticScene scene = generate_scene(small_spec(6));
  for (ImageId id : {2u, 5u}) {
    DescriptorSet& d = scene.dataset.db_descriptors.at(id);
    d.dim = 16;
    d.data.assign(static_cast<std::size_t>(d.rows) * 16, 0.5f);
  }
  const fs::path dir = make_temp_dir("validate_dims");
  write_scene(scene, dir);
  const ValidationReport report = validate_dataset(dir);
  EXPECT_FALSE(report.ok);
  std::set<std::string> subjects;
  for (const Finding& f : report.findings) subjects.insert(f.subject);
  EXPECT_EQ(subjects, (std::set<std::string>{"db_0002", "db_0005"}));
  EXPECT_EQ(report.findings.size(), 2u);
}

TEST(ValidateDataset, MissingConditionTag) {
  const fs::path dir = make_temp_dir("validate_cond");
  write_scene(generate_scene(small_spec(7)), dir);
  std::ifstream in(DatasetLayout(dir).conditions());
  std::string line;
  std::string kept;
  while (std::getline(in, line)) {
    if (line.rfind("query_0002", 0) != 0) kept += line + "\n";
  }
  in.close();
  write_file(DatasetLayout(dir).conditions(), kept);
  const ValidationReport report = validate_dataset(dir);
  ASSERT_EQ(report.findings.size(), 1u);
  EXPECT_EQ(report.findings[0].subject, "query_0002");
}

}  // namespace
}  // namespace semloc
