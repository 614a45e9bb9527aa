#pragma once

#include "skipsr/codec.hpp"
#include "skipsr/common.hpp"
#include "skipsr/metrics.hpp"
#include "skipsr/oracle.hpp"
#include "skipsr/pipeline.hpp"
#include "skipsr/predictor.hpp"
#include "skipsr/resample.hpp"
#include "skipsr/schema.hpp"
#include "skipsr/skipdit.hpp"
#include "skipsr/video.hpp"
#include "skipsr/video_io.hpp"
