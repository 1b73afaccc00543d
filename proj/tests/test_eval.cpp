#include <doctest.h>

#include "refdepth/eval.hpp"
