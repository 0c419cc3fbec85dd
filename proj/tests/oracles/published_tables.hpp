#pragma once

// Per-descriptor percentages and printed averages of the binary and
// multiclass result tables, transcribed row by row in taxonomy order.

#include <array>
#include <string_view>

namespace published {

struct BinaryColumn {
  std::string_view model;
  std::array<double, 12> r_pos;
  std::array<double, 12> p_neg;
  double avg_r_pos;
  double avg_p_neg;
};

inline constexpr std::array<BinaryColumn, 4> kBinary{{
    {"LLaVA",
     {16.87, 45.22, 16.25, 45.05, 22.87, 33.96, 34.25, 33.33, 40.54, 15.79, 74.29, 71.79},
     {85.52, 93.22, 74.65, 93.45, 84.54, 88.67, 94.98, 90.16, 97.72, 95.06, 97.01, 98.85},
     37.52, 91.15},
    {"Qwen3",
     {13.86, 26.09, 24.38, 36.94, 10.11, 28.30, 26.03, 27.54, 16.22, 12.28, 16.19, 51.28},
     {85.07, 91.06, 76.54, 92.55, 82.43, 87.82, 94.39, 89.40, 96.82, 94.87, 90.87, 98.02},
     24.10, 89.99},
    {"Gemini",
     {43.37, 48.70, 52.30, 55.86, 41.49, 55.97, 52.05, 42.75, 32.43, 15.79, 87.62, 71.79},
     {85.22, 90.95, 75.89, 92.41, 82.54, 88.69, 94.78, 87.83, 96.41, 93.13, 97.89, 98.38},
     50.01, 90.34},
    {"QwenSafe",
     {54.22, 40.00, 55.48, 57.66, 46.28, 52.20, 60.27, 51.45, 35.14, 24.56, 60.95, 74.36},
     {91.15, 92.38, 79.78, 94.33, 88.55, 91.10, 96.64, 92.29, 97.44, 95.46, 93.84, 98.62},
     51.05, 92.63},
}};

// Nine severity-graded descriptors; metric order p_mild, r_mild, p_strong, r_strong.
struct MulticlassColumn {
  std::string_view model;
  std::array<std::array<double, 4>, 9> rows;
  std::array<double, 4> average;
};

inline constexpr std::array<std::string_view, 4> kMulticlassMetricNames{"p_mild", "r_mild", "p_strong", "r_strong"};

inline constexpr std::array<MulticlassColumn, 3> kMulticlass{{
    {"Qwen3",
     {{{71.43, 6.76, 66.67, 33.33},
       {75.00, 5.77, 22.73, 45.45},
       {88.89, 3.48, 55.00, 62.26},
       {100.00, 3.37, 44.74, 77.27},
       {90.00, 5.45, 33.33, 13.04},
       {90.48, 13.29, 25.00, 37.50},
       {50.00, 1.52, 5.88, 14.29},
       {100.00, 1.63, 33.33, 80.00},
       {0.00, 0.00, 80.00, 50.00}}},
     {73.98, 4.58, 40.74, 45.91}},
    {"Gemini",
     {{{92.59, 33.78, 50.00, 50.00},
       {76.19, 15.38, 11.43, 36.36},
       {80.77, 27.39, 35.71, 47.17},
       {80.00, 17.98, 38.10, 72.73},
       {82.93, 20.61, 16.22, 26.09},
       {85.11, 27.97, 16.67, 43.75},
       {90.00, 13.64, 10.71, 42.86},
       {92.86, 21.14, 29.03, 60.00},
       {75.00, 10.34, 62.50, 62.50}}},
     {83.94, 20.91, 30.04, 49.05}},
    {"QwenSafe",
     {{{69.52, 49.32, 52.94, 50.00},
       {50.00, 23.08, 28.57, 72.73},
       {31.95, 36.96, 31.52, 54.72},
       {26.55, 33.71, 35.90, 63.64},
       {81.11, 44.24, 22.22, 8.70},
       {54.22, 31.47, 20.45, 56.25},
       {35.59, 31.82, 5.17, 42.86},
       {63.24, 34.96, 25.00, 73.33},
       {33.33, 20.69, 24.00, 75.00}}},
     {49.50, 34.03, 27.31, 55.25}},
}};

}  // namespace published
