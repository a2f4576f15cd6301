from . import boost_service, convnet_service, dedup_service, evaluation_service, feature_service
from . import image_service, layers, learners, log_service, logreg_service, manifest_service
from . import model_service, pattern_service, synth_service, training_service
