"""
Grammar source loader for http(s) URLs
"""
import logging

import requests

from errors import ToolkitError

logger = logging.getLogger(__name__)


def is_url(location: str) -> bool:
    return location.startswith(("http://", "https://"))


def load_source(url: str, timeout: int = 30) -> str:
    """
    Fetch grammar (or tree, term, triple) source text from a URL

    Args:
        url: http(s) location of the source file
        timeout: Request timeout in seconds

    Returns:
        The response body as text

    Raises:
        ToolkitError: Timeout, HTTP error status or connection failure
    """
    logger.info(f"Loading source from: {url}")

    try:
        response = requests.get(url, timeout=timeout)
        response.raise_for_status()
    except requests.exceptions.Timeout:
        logger.error(f"Timeout loading source from {url}")
        raise ToolkitError(f"Request timed out after {timeout} seconds: {url}")
    except requests.exceptions.HTTPError as e:
        logger.error(f"HTTP error: {e}")
        raise ToolkitError(f"Server refused {url}: {e}")
    except requests.exceptions.RequestException as e:
        logger.error(f"Request error: {e}")
        raise ToolkitError(f"Failed to fetch {url}: {e}")

    content_length = response.headers.get("content-length")
    if content_length:
        logger.info(f"Source size: {int(content_length) / 1024:.1f} KB")
    return response.text
