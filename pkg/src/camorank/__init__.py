"""camorank: joint fixation localization, camouflage segmentation and
camouflage ranking, desk-scale and fully testable.

Subpackages and modules:

* ``annotation`` -- eye-tracking sessions to detection delays and rank maps
* ``metrics`` -- segmentation, ranking and fixation evaluation metrics
* ``model`` -- the triple-task network and its detection machinery
* ``losses`` -- training objectives including the similarity-prior rank loss
* ``data`` -- dataset layout IO and the synthetic corpus generator
* ``pipeline`` -- training/evaluation orchestration
* ``cli`` -- the ``camorank`` command line entry point
"""

__version__ = "0.1.0"
