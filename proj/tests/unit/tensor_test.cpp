#include <gtest/gtest.h>

#include <cmath>

#include "weatherlpr/error.hpp"
#include "weatherlpr/tensor.hpp"

using namespace wlpr;

TEST(Shape, RankAndCount) {
    const Shape s{2, 3, 4};
    EXPECT_EQ(s.rank(), 3);
    EXPECT_EQ(s.numel(), 24u);
    EXPECT_EQ(s[1], 3);
    EXPECT_EQ(s.str(), "(2, 3, 4)");
}

TEST(Shape, RejectsBadExtents) {
    EXPECT_THROW((Shape{2, 0}), ShapeError);
    EXPECT_THROW((Shape{1, 2, 3, 4, 5}), ShapeError);
    EXPECT_THROW((Shape{2, 3}[2]), ShapeError);
}

TEST(Tensor, DefaultIsEmpty) {
    Tensor t;
    EXPECT_TRUE(t.empty());
    EXPECT_EQ(t.numel(), 0u);
}

TEST(Tensor, RowMajorAt) {
    Tensor t(Shape{1, 2, 3, 2});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(i);
    EXPECT_EQ(t.at(0, 1, 2, 1), 11.0);
    EXPECT_EQ(t.at(0, 0, 1, 0), 2.0);
}

TEST(Tensor, ArithmeticChecksShapes) {
    Tensor a(Shape{2, 2}, 1.0), b(Shape{2, 2}, 2.0), c(Shape{4}, 1.0);
    EXPECT_EQ(sum(a + b), 12.0);
    EXPECT_EQ(sum(b - a), 4.0);
    EXPECT_EQ(sum(a * 3.0), 12.0);
    EXPECT_EQ(dot(a, b), 8.0);
    EXPECT_THROW(a += c, ShapeError);
    EXPECT_THROW(require_same_shape(a, c, "test"), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
    Tensor a(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    const Tensor b = a.reshaped(Shape{3, 2});
    EXPECT_EQ(b.shape(), (Shape{3, 2}));
    EXPECT_EQ(b[5], 6.0);
    EXPECT_THROW(a.reshaped(Shape{4}), ShapeError);
}

TEST(Tensor, ValueCountMustMatchShape) { EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError); }

TEST(Tensor, FiniteCheck) {
    Tensor a(Shape{3}, 1.0);
    EXPECT_TRUE(a.all_finite());
    a[1] = std::nan("");
    EXPECT_FALSE(a.all_finite());
}
