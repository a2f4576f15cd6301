import numpy as np
import pytest

from imgcred.core.errors import DataError, ShapeError
from imgcred.services.feature_service import (
    DESCRIPTOR_DIM,
    TEXT_FEATURE_NAMES,
    Lexicons,
    Vocabulary,
    bovw_feature_matrix,
    bovw_histogram,
    build_vocabulary,
    extract_descriptors,
    read_feature_csv,
    text_feature_matrix,
    text_features,
    write_feature_csv,
)
from imgcred.services.image_service import ImageTensor


@pytest.fixture(scope="module")
def lexicons():
    return Lexicons.load()


def _named(vector):
    return dict(zip(TEXT_FEATURE_NAMES, vector))


class TestTextFeatures:
    def test_question_with_link_and_mention(self, lexicons):
        text = "is it real? http://x @u"
        features = _named(text_features(text, lexicons))
        assert len(features) == 16
        assert features["question_count"] == 1
        assert features["exclamation_count"] == 0
        assert features["url_count"] == 1
        assert features["mention_count"] == 1
        assert features["hashtag_count"] == 0
        assert features["word_count"] == 5
        assert features["char_count"] == len(text)
        assert features["third_person_count"] == 1
        assert features["sentiment_score"] == 0.0

    def test_multi_word_lexicon_entry(self, lexicons):
        features = _named(text_features("I love New York!", lexicons))
        assert features["location_count"] == 1
        assert features["first_person_count"] == 1
        assert features["positive_word_count"] == 1
        assert features["sentiment_score"] == 1.0

    def test_punctuation_inside_links_is_not_counted(self, lexicons):
        features = _named(text_features("seen http://x.com/a?b=1&c=!2 really?!!", lexicons))
        assert features["question_count"] == 1
        assert features["exclamation_count"] == 2
        assert features["url_count"] == 1

    def test_sentiment_balance(self):
        lists = {category: [] for category in ("first_person", "second_person", "third_person", "people",
                                               "location", "organization")}
        custom = Lexicons.from_lists({**lists, "positive": ["good", "great"], "negative": ["bad"]})
        features = _named(text_features("good great bad #news", custom))
        assert features["sentiment_score"] == pytest.approx(1 / 3)
        assert features["hashtag_count"] == 1

    def test_empty_text(self, lexicons):
        assert not text_features("", lexicons).any()
        assert text_feature_matrix([], lexicons).shape == (0, 16)

    def test_missing_lexicon_category(self, tmp_path):
        with pytest.raises(DataError):
            Lexicons.from_lists({"positive": ["good"]})
        with pytest.raises(DataError, match="lexicon file not found"):
            Lexicons.load(tmp_path)


class TestDescriptors:
    def test_constant_image_gives_zero_descriptors(self):
        descriptors = extract_descriptors(ImageTensor(np.full((16, 16, 1), 0.4)))
        assert descriptors.shape == (1, DESCRIPTOR_DIM)
        assert not descriptors.any()

    def test_grid_and_normalization(self):
        img = ImageTensor(np.random.default_rng(0).random((32, 32, 3)))
        descriptors = extract_descriptors(img, grid_step=8, patch=16)
        assert descriptors.shape == (9, DESCRIPTOR_DIM)
        np.testing.assert_allclose(np.linalg.norm(descriptors, axis=1), 1.0)
        assert np.all(descriptors >= 0.0)

    def test_image_smaller_than_a_patch(self):
        assert extract_descriptors(ImageTensor(np.zeros((8, 40, 1)))).shape == (0, DESCRIPTOR_DIM)

    def test_patch_must_split_into_cells(self):
        with pytest.raises(ShapeError):
            extract_descriptors(ImageTensor(np.zeros((16, 16, 1))), patch=10)


class TestVocabulary:
    def test_one_cluster_per_point(self):
        points = np.arange(12, dtype=np.float64).reshape(4, 3)
        vocab = build_vocabulary(points, k=4, seed=0)
        assert vocab.objective_history[-1] == 0.0
        assert sorted(map(tuple, vocab.centroids)) == sorted(map(tuple, points))

    def test_two_clouds(self):
        rng = np.random.default_rng(1)
        points = np.vstack([rng.normal(0.0, 0.1, (50, 2)), rng.normal(10.0, 0.1, (50, 2))])
        vocab = build_vocabulary(points, k=2, seed=3)
        centers = vocab.centroids[np.argsort(vocab.centroids[:, 0])]
        np.testing.assert_allclose(centers, [[0.0, 0.0], [10.0, 10.0]], atol=0.1)
        history = vocab.objective_history
        assert all(later <= earlier + 1e-9 for earlier, later in zip(history, history[1:]))

    def test_deterministic(self):
        points = np.random.default_rng(2).random((60, 4))
        first = build_vocabulary(points, k=5, seed=7)
        second = build_vocabulary(points, k=5, seed=7)
        np.testing.assert_array_equal(first.centroids, second.centroids)

    def test_too_few_distinct_descriptors(self):
        with pytest.raises(DataError):
            build_vocabulary(np.zeros((10, 3)), k=2)
        with pytest.raises(DataError):
            build_vocabulary(np.zeros((1, 3)), k=2)


class TestHistograms:
    def test_histogram_is_a_distribution(self):
        vocab = Vocabulary(centroids=np.array([[0.0, 0.0], [1.0, 1.0]]))
        hist = bovw_histogram(np.array([[0.1, 0.0], [0.9, 1.0], [1.0, 0.9], [0.5, 0.5]]), vocab)
        # the equidistant point goes to the lower index
        np.testing.assert_allclose(hist, [0.5, 0.5])
        np.testing.assert_array_equal(bovw_histogram(np.zeros((0, 2)), vocab), [0.0, 0.0])
        with pytest.raises(ShapeError):
            bovw_histogram(np.zeros((1, 3)), vocab)

    def test_feature_matrix_rows(self):
        vocab = Vocabulary(centroids=np.vstack([np.zeros(DESCRIPTOR_DIM), np.full(DESCRIPTOR_DIM, 0.1)]))
        images = [ImageTensor(np.full((16, 16, 1), 0.5)), ImageTensor(np.zeros((4, 4, 1)))]
        matrix = bovw_feature_matrix(images, vocab)
        np.testing.assert_array_equal(matrix, [[1.0, 0.0], [0.0, 0.0]])


class TestFeatureCsv:
    def test_round_trip(self, tmp_path):
        matrix = np.array([[0.1, 2.0], [3.5, -1.0]])
        path = write_feature_csv(tmp_path / "f.csv", ["007", "b"], matrix, ["x", "y"], labels=[1, 0])
        ids, read_back, labels = read_feature_csv(path)
        assert ids == ["007", "b"]
        np.testing.assert_allclose(read_back, matrix, rtol=1e-15)
        np.testing.assert_array_equal(labels, [1, 0])

    def test_without_labels(self, tmp_path):
        path = write_feature_csv(tmp_path / "f.csv", ["a"], np.ones((1, 2)), ["x", "y"])
        assert read_feature_csv(path)[2] is None

    def test_partially_labeled(self, tmp_path):
        path = write_feature_csv(tmp_path / "f.csv", ["a", "b"], np.ones((2, 1)), ["x"], labels=[1, None])
        with pytest.raises(DataError, match="unlabeled"):
            read_feature_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_feature_csv(tmp_path / "absent.csv")
