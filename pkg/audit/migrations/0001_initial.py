import audit.models
import django.core.serializers.json
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='RunLog',
            fields=[
                ('id', models.BigAutoField(primary_key=True, serialize=False)),
                ('command', models.CharField(max_length=50)),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('completed_with_failures', 'Completed with failed samples'), ('failed', 'Failed')], max_length=30)),
                ('total_processed', models.PositiveIntegerField(default=0)),
                ('successful', models.PositiveIntegerField(default=0)),
                ('failed', models.PositiveIntegerField(default=0)),
                ('errors', models.JSONField(default=list, encoder=django.core.serializers.json.DjangoJSONEncoder)),
                ('non_converged', models.JSONField(blank=True, default=list)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('jobs', models.PositiveIntegerField(default=1)),
                ('config_hash', models.CharField(blank=True, max_length=64)),
                ('artifact', models.CharField(blank=True, max_length=500)),
                ('duration', models.FloatField(default=0.0)),
                ('created_at', audit.models.CreatedAtField()),
            ],
            options={
                'db_table': 'run_logs',
                'ordering': ['-created_at'],
            },
        ),
    ]
