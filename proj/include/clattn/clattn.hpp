#pragma once

#include <clattn/attention.hpp>
#include <clattn/bench.hpp>
#include <clattn/diagnostics.hpp>
#include <clattn/kmeans.hpp>
#include <clattn/lsh.hpp>
#include <clattn/matrix.hpp>
#include <clattn/synthetic.hpp>
#include <clattn/tensor_file.hpp>
#include <clattn/verify.hpp>
