#include <doctest.h>

#include "refdepth/losses.hpp"
