#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "hte/io.hpp"
#include "hte/simulate.hpp"

using namespace hte;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/hte_io_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
  void write(const std::string& content) const {
    std::ofstream out(path);
    out << content;
  }
};

const std::string kHeader = "id,r,z,y1,y0,x1\n";

}  // namespace

TEST_CASE("dataset csv round trip preserves everything") {
  SimulationConfig cfg;
  cfg.n = 200;
  cfg.dgp = GaussianModelParams::simulationTruth();
  cfg.seed = 42;
  cfg.setup = StudySetup::RCT_ONE_SIDED;
  const Dataset original = simulateGaussianStudy(cfg);

  TempFile tmp("roundtrip.csv");
  writeDatasetCsv(original, tmp.path);
  const Dataset loaded = readDatasetCsv(tmp.path, StudySetup::RCT_ONE_SIDED);

  REQUIRE(loaded.units.size() == original.units.size());
  REQUIRE(loaded.d == original.d);
  for (std::size_t i = 0; i < original.units.size(); ++i) {
    const UnitRecord& a = original.units[i];
    const UnitRecord& b = loaded.units[i];
    CHECK(a.id == b.id);
    CHECK(a.r == b.r);
    CHECK(a.z == b.z);
    CHECK(a.y1.has_value() == b.y1.has_value());
    CHECK(a.y0.has_value() == b.y0.has_value());
    if (a.y1) CHECK(*a.y1 == *b.y1);
    if (a.y0) CHECK(*a.y0 == *b.y0);
    REQUIRE(a.x.size() == b.x.size());
    for (std::size_t k = 0; k < a.x.size(); ++k) CHECK(a.x[k] == b.x[k]);
  }
}

TEST_CASE("hand-written three-line fixture parses field by field") {
  TempFile tmp("fixture.csv");
  tmp.write(kHeader +
            "0,1,1,2.5,NA,0.1\n"
            "1,1,0,NA,1.25,-0.5\n"
            "2,0,NA,NA,0.75,2\n");
  const Dataset data = readDatasetCsv(tmp.path);
  REQUIRE(data.units.size() == 3);
  CHECK(data.d == 1);

  CHECK(data.units[0].r == 1);
  REQUIRE(data.units[0].z.has_value());
  CHECK(*data.units[0].z == 1);
  CHECK(*data.units[0].y1 == 2.5);
  CHECK_FALSE(data.units[0].y0.has_value());
  CHECK(data.units[0].x[0] == 0.1);

  CHECK(data.units[1].r == 1);
  CHECK(*data.units[1].z == 0);
  CHECK_FALSE(data.units[1].y1.has_value());
  CHECK(*data.units[1].y0 == 1.25);

  CHECK(data.units[2].r == 0);
  CHECK_FALSE(data.units[2].z.has_value());
  CHECK(*data.units[2].y0 == 0.75);
  CHECK(data.units[2].x[0] == 2.0);
}

TEST_CASE("malformed csv input is rejected with line numbers") {
  SECTION("wrong header") {
    TempFile tmp("badheader.csv");
    tmp.write("id,r,z,y0,y1,x1\n0,0,NA,NA,1.0,0.0\n");
    CHECK_THROWS_WITH(readDatasetCsv(tmp.path), Catch::Matchers::ContainsSubstring("line 1"));
  }
  SECTION("wrong covariate names") {
    TempFile tmp("badxname.csv");
    tmp.write("id,r,z,y1,y0,w1\n");
    CHECK_THROWS_AS(readDatasetCsv(tmp.path), ParseError);
  }
  SECTION("non-binary r") {
    TempFile tmp("badr.csv");
    tmp.write(kHeader + "0,2,NA,NA,1.0,0.0\n");
    CHECK_THROWS_WITH(readDatasetCsv(tmp.path),
                      Catch::Matchers::ContainsSubstring("line 2: r must be 0 or 1"));
  }
  SECTION("non-binary z") {
    TempFile tmp("badz.csv");
    tmp.write(kHeader + "0,1,3,1.0,NA,0.0\n");
    CHECK_THROWS_WITH(readDatasetCsv(tmp.path), Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("missing covariate") {
    TempFile tmp("badx.csv");
    tmp.write(kHeader + "0,0,NA,NA,1.0,NA\n");
    CHECK_THROWS_WITH(readDatasetCsv(tmp.path),
                      Catch::Matchers::ContainsSubstring("covariates may not be NA"));
  }
  SECTION("unparseable number reports column and line") {
    TempFile tmp("badnum.csv");
    tmp.write(kHeader + "0,0,NA,NA,1.0,0.5\n1,0,NA,NA,oops,0.5\n");
    CHECK_THROWS_WITH(readDatasetCsv(tmp.path), Catch::Matchers::ContainsSubstring("line 3"));
  }
  SECTION("treated unit with observed y0 violates one-sided structure") {
    TempFile tmp("bothoutcomes.csv");
    tmp.write(kHeader + "0,1,1,2.0,1.0,0.0\n");
    CHECK_THROWS_WITH(readDatasetCsv(tmp.path), Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("negative outcome is rejected only in censored mode") {
    TempFile tmp("negative.csv");
    tmp.write(kHeader + "0,0,NA,NA,-1.0,0.0\n");
    CHECK_NOTHROW(readDatasetCsv(tmp.path, StudySetup::RCT_ONE_SIDED, false));
    CHECK_THROWS_WITH(
        readDatasetCsv(tmp.path, StudySetup::RCT_ONE_SIDED, true),
        Catch::Matchers::ContainsSubstring("negative outcome not allowed in censored mode"));
  }
}

TEST_CASE("auxiliary moments json") {
  const nlohmann::json good = {{"meanY0", 1.2}, {"meanX", {0.1, -0.3}}, {"probZ0", 0.6}};
  const AuxiliaryMoments aux = auxMomentsFromJson(good);
  CHECK(aux.meanY0 == 1.2);
  REQUIRE(aux.meanX.size() == 2);
  CHECK(aux.meanX[1] == -0.3);
  CHECK(aux.probZ0 == 0.6);
  CHECK_FALSE(aux.momentY0Sq.has_value());
  CHECK(aux.source == AuxiliaryMoments::Source::MACRO_GIVEN);

  nlohmann::json withSq = good;
  withSq["momentY0Sq"] = 2.5;
  CHECK(*auxMomentsFromJson(withSq).momentY0Sq == 2.5);

  nlohmann::json unknown = good;
  unknown["typo"] = 1.0;
  CHECK_THROWS_WITH(auxMomentsFromJson(unknown), Catch::Matchers::ContainsSubstring("typo"));

  CHECK_THROWS_AS(auxMomentsFromJson(nlohmann::json{{"meanY0", 1.0}}), ParseError);

  const nlohmann::json round = auxMomentsToJson(auxMomentsFromJson(withSq));
  CHECK(round.at("momentY0Sq").get<double>() == 2.5);
  CHECK(round.at("meanX").get<std::vector<double>>() == std::vector<double>{0.1, -0.3});
}

TEST_CASE("curve csv uses NA for flagged grid points") {
  HteCurve curve;
  curve.grid = {0.5, 1.0};
  curve.mean = {0.25, 99.0};
  curve.lo95 = {0.1, 98.0};
  curve.hi95 = {0.4, 100.0};
  curve.flagged = {0, 1};

  TempFile tmp("curve.csv");
  writeHteCurveCsv(curve, tmp.path);
  std::ifstream in(tmp.path);
  std::string header, row1, row2;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  CHECK(header == "y0,mean,lo95,hi95");
  CHECK(row1 == "0.5,0.25,0.1,0.4");
  CHECK(row2 == "1,NA,NA,NA");
}
