#include <gtest/gtest.h>

#include "taintperf/libdb.hpp"
#include "taintperf/util.hpp"

using namespace taintperf;
using namespace taintperf::libdb;

TEST(LibDb, SourceWriteEntryLoadsAndLabelsSecondArgument) {
  auto db = parse_db(R"({"implicit_params": ["p"],
    "routines": [{"name": "MPI_Comm_size", "arity": 1, "source_writes": [{"arg": 1, "label": "p"}]}]})");
  const auto* e = db.find("MPI_Comm_size");
  ASSERT_NE(e, nullptr);
  ParamTable t({"size", "p"});
  std::vector<double> vals{0};
  std::vector<LabelSet> labels{LabelSet{}};
  auto fx = apply_extern(*e, vals, labels, {}, t, {{"p", 8}});
  ASSERT_EQ(fx.writes.size(), 1u);
  EXPECT_EQ(fx.writes[0].arg, 1);
  EXPECT_EQ(fx.writes[0].value, 8);
  EXPECT_EQ(t.names(fx.writes[0].labels), ParamSet{"p"});
  EXPECT_FALSE(fx.has_dependency);
}

TEST(LibDb, DependencyTemplateUnionsParamAndArgumentLabels) {
  auto db = default_db();
  ParamTable t({"size", "p"});
  std::vector<double> vals{1, 100};
  std::vector<LabelSet> labels{LabelSet{}, t.label("size")};
  auto fx = apply_extern(*db.find("MPI_Send"), vals, labels, {}, t, {{"p", 4}});
  EXPECT_TRUE(fx.has_dependency);
  EXPECT_EQ(t.names(fx.dependency), (ParamSet{"p", "size"}));
}

TEST(LibDb, ControlLabelsReachWritesAndReturn) {
  auto db = default_db();
  ParamTable t({"size", "p"});
  std::vector<double> vals{0};
  std::vector<LabelSet> labels{LabelSet{}};
  auto fx = apply_extern(*db.find("MPI_Comm_rank"), vals, labels, t.label("size"), t, {});
  ASSERT_EQ(fx.writes.size(), 1u);
  EXPECT_EQ(t.names(fx.writes[0].labels), ParamSet{"size"});
  EXPECT_EQ(t.names(fx.return_labels), ParamSet{"size"});
}

TEST(LibDb, NoTemplateMeansNoDependency) {
  auto db = default_db();
  ParamTable t({"p"});
  auto fx = apply_extern(*db.find("MPI_Wtime"), {}, {}, {}, t, {});
  EXPECT_FALSE(fx.has_dependency);
  EXPECT_TRUE(fx.dependency.empty());
}

TEST(LibDb, EmptyFileGivesEmptyDatabase) {
  EXPECT_TRUE(parse_db("").empty());
  EXPECT_TRUE(parse_db("  \n").empty());
}

TEST(LibDb, MalformedEntriesAreRejected) {
  EXPECT_THROW(parse_db("{"), LibDbError);
  EXPECT_THROW(parse_db("[]"), LibDbError);
  EXPECT_THROW(parse_db(R"({"routines": [{"name": "X", "arity": 1, "source_writes": [{"arg": 2, "label": "p"}]}],
                           "implicit_params": ["p"]})"),
               LibDbError);
  EXPECT_THROW(parse_db(R"({"routines": [{"name": "X", "arity": 1, "source_writes": [{"arg": 1, "label": "q"}]}]})"),
               LibDbError);
  EXPECT_THROW(parse_db(R"({"routines": [{"name": "X", "arity": 0}, {"name": "X", "arity": 0}]})"), LibDbError);
  EXPECT_THROW(parse_db(R"({"routines": [{"name": "X", "arity": 1, "dep_template": [{"param": "p", "arg": 1}]}],
                           "implicit_params": ["p"]})"),
               LibDbError);
}

TEST(LibDb, MissingImplicitValueIsAnError) {
  auto db = default_db();
  ParamTable t({"p"});
  std::vector<double> vals{0};
  std::vector<LabelSet> labels{LabelSet{}};
  EXPECT_THROW(apply_extern(*db.find("MPI_Comm_size"), vals, labels, {}, t, {}), LibDbError);
}

TEST(LibDb, DumpParseRoundTripAndShippedFileMatchesBuiltin) {
  auto db = default_db();
  auto text = dump_db(db);
  EXPECT_EQ(dump_db(parse_db(text)), text);
  auto shipped = load_db(std::string(TAINTPERF_SOURCE_DIR) + "/data/libdb.json");
  EXPECT_EQ(dump_db(shipped), text);
}
