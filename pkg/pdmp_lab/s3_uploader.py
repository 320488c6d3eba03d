"""
S3 Uploader for PDMP Lab artifacts
Mirrors run directories to AWS S3 with date partitioning
"""

import logging
import sys
from datetime import date
from pathlib import Path
from typing import List, Optional, Union

import boto3
from botocore.exceptions import BotoCoreError, ClientError

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from utils import date_partition, list_files, safe_name
from .config import S3_BASE_FOLDER

logger = logging.getLogger(__name__)

CONTENT_TYPES = {
    '.json': 'application/json',
    '.csv': 'text/csv',
    '.toml': 'text/plain',
}


class ArtifactS3Uploader:
    """Handles S3 operations for run artifacts"""

    def __init__(self, bucket_name: str, aws_access_key: Optional[str] = None,
                 aws_secret_key: Optional[str] = None, region: str = 'us-east-1', client=None):
        """
        Initialize S3 uploader

        Args:
            bucket_name: S3 bucket name
            aws_access_key: AWS access key ID (None uses the default credential chain)
            aws_secret_key: AWS secret access key
            region: AWS region
            client: Pre-built S3 client (skips the connection test)
        """
        self.bucket_name = bucket_name
        self.region = region

        if client is not None:
            self.s3_client = client
            return
        try:
            self.s3_client = boto3.client(
                's3',
                region_name=region,
                aws_access_key_id=aws_access_key,
                aws_secret_access_key=aws_secret_key
            )
            # Test connection
            self.s3_client.head_bucket(Bucket=bucket_name)
            logger.info(f"Successfully connected to S3 bucket: {bucket_name}")
        except (ClientError, BotoCoreError) as e:
            logger.error(f"Failed to connect to S3 bucket {bucket_name}: {str(e)}")
            raise

    @staticmethod
    def build_s3_key(model: str, seed: int, subcommand: str, filename: str,
                     target_date: date, base_folder: str = S3_BASE_FOLDER) -> str:
        """
        Build S3 key with date partitioning

        Example: pdmp-lab/dirac-trap/year=2026/month=01/day=25/seed=42/invariant/measure.csv
        """
        return (f"{base_folder}/{safe_name(model)}/{date_partition(target_date)}/"
                f"seed={seed}/{safe_name(subcommand)}/{filename}")

    def upload_file(self, path: Union[str, Path], s3_key: str) -> bool:
        """
        Upload one file to S3

        Returns:
            True if successful, False otherwise
        """
        path = Path(path)
        try:
            self.s3_client.put_object(
                Bucket=self.bucket_name,
                Key=s3_key,
                Body=path.read_bytes(),
                ContentType=CONTENT_TYPES.get(path.suffix, 'application/octet-stream')
            )
            logger.info(f"Successfully uploaded to s3://{self.bucket_name}/{s3_key}")
            return True
        except (ClientError, BotoCoreError, OSError) as e:
            logger.error(f"Error uploading {s3_key}: {str(e)}")
            return False

    def check_if_exists(self, s3_key: str) -> bool:
        try:
            self.s3_client.head_object(Bucket=self.bucket_name, Key=s3_key)
            return True
        except ClientError:
            return False

    def upload_directory(self, directory: Union[str, Path], model: str, seed: int,
                         subcommand: str, target_date: date) -> bool:
        """
        Upload every file of a run directory

        Returns:
            True if all uploads successful
        """
        directory = Path(directory)
        success = True
        files = list_files(directory)
        for path in files:
            relative = path.relative_to(directory).as_posix()
            key = self.build_s3_key(model, seed, subcommand, relative, target_date)
            if not self.upload_file(path, key):
                success = False
        logger.info(f"Upload complete: {len(files)} files from {directory}")
        return success

    def list_files(self, prefix: str) -> List[str]:
        """List keys under a prefix"""
        try:
            response = self.s3_client.list_objects_v2(Bucket=self.bucket_name, Prefix=prefix)
            return [obj['Key'] for obj in response.get('Contents', [])]
        except ClientError as e:
            logger.error(f"Error listing files with prefix {prefix}: {str(e)}")
            return []
