# pylint: disable=too-many-statements