#include "dehaze/core.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace dehaze;

TEST_CASE("image layout is interleaved HWC")
{
    Image img(2, 3, 3);
    img.at(1, 2, 1) = 0.5;
    CHECK(img.data()[(1 * 3 + 2) * 3 + 1] == 0.5);
    CHECK(img.size() == 18);
    CHECK(img.same_shape(Image(2, 3, 3)));
    CHECK_FALSE(img.same_shape(Image(3, 2, 3)));
}

TEST_CASE("clamp_unit projects onto [0, 1] and rejects non-finite values")
{
    Image img(1, 2, 3);
    img.at(0, 0, 0) = -0.5;
    img.at(0, 0, 1) = 1.5;
    img.at(0, 1, 2) = 0.25;
    const Image c = clamp_unit(img);
    CHECK(c.at(0, 0, 0) == 0.0);
    CHECK(c.at(0, 0, 1) == 1.0);
    CHECK(c.at(0, 1, 2) == 0.25);

    img.at(0, 1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(clamp_unit(img), doctest::Contains("non-finite"), ValidationError);
}

TEST_CASE("validate_image reports the first violated invariant")
{
    CHECK(validate_image(Image()).value() == "empty image");
    CHECK(validate_image(Image(2, 2, 1)).value().find("channel") != std::string::npos);
    Image img(2, 2, 3, 0.5);
    CHECK_FALSE(validate_image(img).has_value());
    img.at(1, 1, 2) = std::numeric_limits<double>::infinity();
    CHECK(validate_image(img).value().find("non-finite") != std::string::npos);
    CHECK_THROWS_AS(require_valid(img), ValidationError);
}

TEST_CASE("component kinds round-trip through their names")
{
    for (auto kind : kAllKinds)
        CHECK(parse_kind(to_string(kind)) == kind);
    CHECK(parse_kind("sin") == ComponentKind::SIN);
    CHECK_THROWS_AS(parse_kind("TAN"), ConfigError);
}

TEST_CASE("custom head lists are ordered canonically and validated")
{
    const VariantSpec spec = variant_from_heads("SIN, AS ,MUL");
    REQUIRE(spec.active_kinds.size() == 3);
    CHECK(spec.active_kinds[0] == ComponentKind::AS);
    CHECK(spec.active_kinds[1] == ComponentKind::MUL);
    CHECK(spec.active_kinds[2] == ComponentKind::SIN);
    CHECK(spec.name == "AS,MUL,SIN");
    CHECK_THROWS_AS(variant_from_heads(""), ConfigError);
    CHECK_THROWS_AS(variant_from_heads("AS,AS"), ConfigError);
    CHECK_THROWS_AS(validate_variant(VariantSpec{"empty", {}}), ConfigError);
}
