#pragma once

#include <string>
#include <vector>

namespace mmsd {

// Renders a confusion matrix as a PNG heatmap: one row-normalized colored
// cell per entry, thin grid lines, rows = true class top to bottom in
// table order. Cell counts live in the CSV/JSON reports; the image is the
// at-a-glance view.
void render_confusion_png(const std::vector<std::vector<int>>& confusion,
                          const std::string& path, int cell_size = 48);

}  // namespace mmsd
