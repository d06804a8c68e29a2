#pragma once

#include "ahfic/errors.hpp"
#include "ahfic/dataset.hpp"
#include "ahfic/model_spec.hpp"
#include "ahfic/estimators.hpp"
#include "ahfic/fic.hpp"
#include "ahfic/wfic.hpp"
#include "ahfic/sampling.hpp"
#include "ahfic/selector.hpp"
#include "ahfic/bootstrap.hpp"
#include "ahfic/io.hpp"
